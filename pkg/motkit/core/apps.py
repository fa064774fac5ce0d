from django.apps import AppConfig


class CoreConfig(AppConfig):
    name = "motkit.core"
    default_auto_field = "django.db.models.AutoField"
