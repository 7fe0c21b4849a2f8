import os

from django.test.runner import DiscoverRunner


class KoopnetTestSuiteRunner(DiscoverRunner):
    """ Django's DiscoverRunner that also picks up the tests of the apps listed in
        KOOPNET_ADDITIONAL_TEST_APPS (koopnet itself by default) and leaves out tests tagged
        "slow" unless KOOPNET_SLOW_TESTS is set in the environment.
    """

    def __init__(self, *args, **kwargs):
        if not os.environ.get("KOOPNET_SLOW_TESTS"):
            kwargs["exclude_tags"] = set(kwargs.get("exclude_tags") or ()) | {"slow"}
        super(KoopnetTestSuiteRunner, self).__init__(*args, **kwargs)

    def build_suite(self, test_labels=None, *args, **kwargs):
        if not test_labels:
            from django.conf import settings
            test_labels = list(getattr(settings, "KOOPNET_ADDITIONAL_TEST_APPS", ("koopnet",)))
        return super(KoopnetTestSuiteRunner, self).build_suite(test_labels, *args, **kwargs)
