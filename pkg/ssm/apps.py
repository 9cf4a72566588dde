from django.apps import AppConfig


class SsmConfig(AppConfig):
    name = 'ssm'
