from .config import BatchMember, DynamicsConfig, GainsConfig, ScenarioConfig
from .exceptions import UnknownPresetError

PRESET_DESCRIPTIONS = {
    'w-selection-bad': 'visual servoing only with W = I (unweighted pseudoinverse)',
    'w-selection-good': 'visual servoing only with W = diag(1, 1, 1, 50, 50, 1)',
    'vs-vs-nmpc': 'visual servoing + NMPC at a 5 m height reference against the 4.5 m altitude bound',
    'tuned': 'K = diag(300, 0.8), 0.5 m/s forward speed, 10% model mismatch',
    'batch8': 'the tuned scenario from eight lateral offsets with distinct seeds',
}

BATCH_OFFSETS = (0.3, -0.3, 0.6, -0.6, 0.9, -0.9, 1.2, -1.2)


def experiment_presets(name):
    """The ScenarioConfig of a named experiment"""
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise UnknownPresetError(f'Unknown preset {name!r}; choose from {sorted(_PRESETS)}') from None
    return factory()


def preset_names():
    return list(_PRESETS)


def _w_selection(W, name):
    return ScenarioConfig(
        name=name,
        mode='vs',
        gains=GainsConfig(W=W, v_x_max=1.0, eta_zd=3.0),
        initial_state=(10.0, 0.0, 3.0, 0.1, 0.0, 0.0, 0.0, 0.0),
        lateral_offset=0.5,
        duration=40.0,
    )


def _vs_vs_nmpc():
    return ScenarioConfig(
        name='vs-vs-nmpc',
        mode='vs-nmpc',
        gains=GainsConfig(v_x_max=1.0, eta_zd=5.0),
        lateral_offset=0.3,
        duration=30.0,
    )


def _tuned(name='tuned'):
    return ScenarioConfig(
        name=name,
        mode='vs-nmpc',
        gains=GainsConfig(K=(300.0, 0.8), v_x_max=0.5, eta_zd=3.0),
        dynamics=DynamicsConfig(mismatch=0.1),
        lateral_offset=0.3,
        duration=40.0,
    )


def _batch8():
    config = _tuned('batch8')
    members = [BatchMember(lateral_offset=offset, seed=seed) for seed, offset in enumerate(BATCH_OFFSETS, 1)]
    return config.model_copy(update={'batch': members})


_PRESETS = {
    'w-selection-bad': lambda: _w_selection((1.0, 1.0, 1.0, 1.0, 1.0, 1.0), 'w-selection-bad'),
    'w-selection-good': lambda: _w_selection((1.0, 1.0, 1.0, 50.0, 50.0, 1.0), 'w-selection-good'),
    'vs-vs-nmpc': _vs_vs_nmpc,
    'tuned': _tuned,
    'batch8': _batch8,
}
