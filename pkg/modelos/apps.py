from django.apps import AppConfig


class ModelosConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'modelos'
