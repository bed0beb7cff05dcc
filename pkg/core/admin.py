from django.contrib import admin
from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ('algo', 'seed', 'session_count', 'median_improvement', 'p95_improvement', 'created_at')
    search_fields = ('algo', 'config_hash', 'output_path')
    list_filter = ('algo', 'created_at')
