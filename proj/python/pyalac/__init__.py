"""Lyapunov-certified actor-critic: training, evaluation and tabular checks."""

from ._core import (
    Agent,
    ConfigError,
    ContractError,
    Env,
    NumericalError,
    TabularMdp,
    candidate_bound_check,
    check_theorem3,
    check_theorem4,
    env_parameter_names,
    evaluate,
    exact_lyapunov,
    load_agent,
    load_mdp,
    make_env,
    predicted_tracking_time,
    random_mdp,
    resolve_config,
    run,
    simulate_tracking,
    stationary_distribution,
    train,
    version,
)

__version__ = version()


def overrides(**kwargs):
    """Turn keyword arguments into key=value override strings.

    Double underscores stand for the section dot: train__lr_actor=1e-4.
    """
    out = []
    for key, value in kwargs.items():
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        out.append(f"{key.replace('__', '.')}={value}")
    return out
