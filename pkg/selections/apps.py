from django.apps import AppConfig


class SelectionsConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "selections"
    verbose_name = "二段階変数選択ラボ"
