import pytest
from hypothesis import HealthCheck, settings

from movbound import _backend

settings.register_profile(
    "movbound",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("movbound")

BACKENDS = ["python"] + (["cython"] if _backend.name == "cython" else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param
