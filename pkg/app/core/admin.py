"""
Django admin customization.
"""
from django.contrib import admin

from core import models


class EpochRecordInline(admin.TabularInline):
    """Show per-epoch records on the run page."""
    model = models.EpochRecord
    extra = 0
    readonly_fields = [
        'epoch', 'lr', 'total', 'softmax_term', 'mean_term', 'tail_term',
        'median_k', 'mean_k', 'eval_mae', 'eval_eps',
    ]
    can_delete = False


class ExperimentRunAdmin(admin.ModelAdmin):
    """Define the admin pages for recorded runs."""
    ordering = ['id']
    list_display = [
        'id', 'command', 'loss', 'k_mode', 'lambda2', 'seed',
        'final_mae', 'final_eps',
    ]
    list_filter = ['command', 'loss', 'protocol']
    readonly_fields = ['created_at']
    inlines = [EpochRecordInline]


admin.site.register(models.ExperimentRun, ExperimentRunAdmin)
