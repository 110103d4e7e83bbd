from django.apps import AppConfig


class CoreConfig(AppConfig):
    name = 'core'
    verbose_name = 'Linealización de OPF con incertidumbre de demanda'
