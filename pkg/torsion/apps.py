from django.apps import AppConfig


class TorsionConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'torsion'
    verbose_name = 'Extremal Torsion'
