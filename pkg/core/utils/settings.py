"""
Lab Settings and Experiment Profiles
Named profiles trade run time against fidelity
"""

from django.conf import settings

from .exceptions import ConfigError

# Experiment profiles
EXPERIMENT_PROFILES = {
    'smoke': {
        'description': 'Seconds - tiny workload for checks and tests',
        'session_count': 400,
        'client_count': 60,
        'arrival_rate_per_min': 200.0,
        'nc_k': 4,
        'update_interval_ms': 30000,
        'bootstrap_classes': 10,
    },
    'standard': {
        'description': 'Minutes - the standard synthetic workload',
        'session_count': 50000,
        'client_count': 5000,
        'arrival_rate_per_min': 500.0,
        'nc_k': 20,
        'update_interval_ms': 120000,
        'bootstrap_classes': 200,
    },
    'large': {
        'description': 'Long - larger population, finer update cadence',
        'session_count': 200000,
        'client_count': 20000,
        'arrival_rate_per_min': 1000.0,
        'nc_k': 20,
        'update_interval_ms': 60000,
        'bootstrap_classes': 500,
    },
}

# Setting name -> default used when django settings do not define it
LAB_SETTING_DEFAULTS = {
    'LAB_OUTPUT_DIR': 'lab_output',
    'LAB_DEFAULT_SEED': 42,
    'LAB_UPDATE_INTERVAL_MS': 120000,
    'LAB_PROPAGATION_DELAY_MS': 0,
    'LAB_EPSILON': 0.05,
    'LAB_LOG_LEVEL': 'INFO',
    'LAB_DEFAULT_PROFILE': 'standard',
}


def get_lab_setting(name):
    """Get a lab setting from django settings, falling back to its default"""
    if name not in LAB_SETTING_DEFAULTS:
        raise KeyError(f"Unknown lab setting '{name}'")
    return getattr(settings, name, LAB_SETTING_DEFAULTS[name])


def get_profile(name=None):
    """Get an experiment profile by name (the configured default when omitted)"""
    if name is None:
        name = get_lab_setting('LAB_DEFAULT_PROFILE')
    if name not in EXPERIMENT_PROFILES:
        raise ConfigError(f"Unknown profile '{name}'. Choose from: {', '.join(EXPERIMENT_PROFILES)}")
    return dict(EXPERIMENT_PROFILES[name])


def get_profile_description(name=None):
    return get_profile(name)['description']
