from hypothesis import HealthCheck, settings

# numba kernels compile on first call, which would trip per-example deadlines
settings.register_profile("cylperc", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("cylperc")
