from django.apps import AppConfig


class TampConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'tamp'
    verbose_name = 'Task and motion planning from demonstration'
