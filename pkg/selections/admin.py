from django.contrib import admin

from .models import ArtifactRecord, RunRecord, TaskRecord


@admin.register(RunRecord)
class RunRecordAdmin(admin.ModelAdmin):
    list_display = (
        "id",
        "command",
        "config_path",
        "seed",
        "status",
        "exit_code",
        "started_at",
        "finished_at",
    )
    list_filter = ("command", "status")


@admin.register(TaskRecord)
class TaskRecordAdmin(admin.ModelAdmin):
    list_display = ("id", "run_id", "key", "status")
    list_filter = ("status",)


@admin.register(ArtifactRecord)
class ArtifactRecordAdmin(admin.ModelAdmin):
    list_display = ("id", "run_id", "path", "kind", "sha256")
