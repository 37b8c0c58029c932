from django.apps import AppConfig


class LosslabConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'losslab'
    verbose_name = 'Loss lab'
