from django.apps import AppConfig
from django.utils.translation import gettext_lazy as _


class KoopnetConfig(AppConfig):
    name = 'koopnet'
    verbose_name = _("Koopnet")

    def ready(self):
        # Validates KOOPNET_CONFIG at startup
        from koopnet.conf import get_config
        get_config()
