"""Experiment configuration files.

Flat ``key = value`` text with sections (INI style), because a sweep has
~20 knobs. Every key has a default; an example file:

    [shiftcal]
    format_version = 1

    [scenario]
    n_domains = 4
    dim = 8
    separation = 6.0
    sigma_x = 1.0
    score_means = 0.2, 0.4, 0.6, 0.8
    score_concentration = 10.0

    [sweep]
    n_environments = 100
    dirichlet_alpha = 0.1
    n_splits = 15
    n_cal_per_domain = 500
    n_test = 2000
    alphas = 0.1
    methods = unweighted, max, oracle, a1, a2
    target_recalls = 0.9
    master_seed = 0

    [algorithm3]
    beta = 0.1
    sigma = 0.7
    similarity = cosine

    [data]
    score_direction = higher
"""

import configparser
import dataclasses

from shiftcal.simulation import ExperimentConfig

FORMAT_VERSION = 1

_SECTIONS = {
    "scenario": {
        "n_domains": int,
        "dim": int,
        "separation": float,
        "sigma_x": float,
        "score_means": "float_list",
        "score_concentration": float,
    },
    "sweep": {
        "n_environments": int,
        "dirichlet_alpha": float,
        "n_splits": int,
        "n_cal_per_domain": int,
        "n_test": int,
        "alphas": "float_list",
        "methods": "str_list",
        "target_recalls": "float_list",
        "master_seed": int,
    },
    "algorithm3": {
        "beta": float,
        "sigma": float,
        "similarity": str,
    },
    "data": {
        "score_direction": str,
    },
}


class ConfigError(ValueError):
    pass


def _convert(raw, kind):
    if kind == "float_list":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if kind == "str_list":
        return tuple(v for v in raw.replace(",", " ").split())
    return kind(raw)


def load_config(path):
    """Parse a config file into a validated ExperimentConfig."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    known_fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for section, keys in _SECTIONS.items():
        if not parser.has_section(section):
            continue
        for key in parser[section]:
            if key not in keys:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                values[key] = _convert(parser[section][key], keys[key])
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for {key!r}: {exc}") from None
    for section in parser.sections():
        if section not in _SECTIONS and section != "shiftcal":
            raise ConfigError(f"{path}: unknown section [{section}]")
    assert set().union(*(_SECTIONS[s] for s in _SECTIONS)) <= known_fields
    try:
        config = ExperimentConfig(**values)
        config.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config
