import warnings

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_runtime_diagnostics():
    # the time-step and Jacobian warnings are advisory; tests that care
    # about them use pytest.warns explicitly
    from mplg.characteristics import JacobianRangeWarning
    from mplg.scheme import TimeStepWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TimeStepWarning)
        warnings.simplefilter("ignore", JacobianRangeWarning)
        yield
