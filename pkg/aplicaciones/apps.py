from django.apps import AppConfig


class AplicacionesConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'aplicaciones'
