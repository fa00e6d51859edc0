from django.apps import AppConfig


class CalibracionConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'calibracion'
