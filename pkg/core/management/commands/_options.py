"""
Shared argument handling for the lab commands.

Precedence, lowest first: experiment profile, django settings, a JSON
config file (--config), command-line flags.
"""

import os
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from django.core.management.base import CommandError

from core.utils import settings as lab_settings
from core.utils.exceptions import ConfigError
from core.utils.harness import ExperimentConfig
from core.utils.workload import WorkloadSpec

CONFIG_ERROR_EXIT = 2


def config_error(message: str) -> CommandError:
    return CommandError(message, returncode=CONFIG_ERROR_EXIT)


def parse_names(value: Optional[str]) -> Optional[Tuple[str, ...]]:
    """'a,b' -> ('a', 'b'); 'all' -> None; 'none' or '' -> ()."""
    if value is None or value.strip().lower() == 'all':
        return None
    if value.strip().lower() in ('', 'none'):
        return ()
    return tuple(name.strip() for name in value.split(',') if name.strip())


def parse_subsets(values: List[str]) -> List[Optional[Tuple[str, ...]]]:
    return [parse_names(value) for value in values]


def parse_assignments(values: Optional[List[str]]) -> Dict[str, float]:
    result = {}
    for item in values or []:
        if '=' not in item:
            raise config_error(f"Expected NAME=VALUE, got '{item}'")
        name, raw = item.split('=', 1)
        try:
            result[name.strip()] = float(raw)
        except ValueError:
            raise config_error(f"'{raw}' is not a number (in '{item}')") from None
    return result


def default_output(name: str) -> str:
    return os.path.join(lab_settings.get_lab_setting('LAB_OUTPUT_DIR'), name)


def add_experiment_arguments(parser) -> None:
    parser.add_argument('--config', help='JSON experiment config; flags override its fields')
    parser.add_argument('--profile', help='Experiment profile: smoke, standard or large')
    parser.add_argument('--algo', help='Strategy kind, e.g. configtron, bonc, optimal')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--workload', help='Workload spec JSON (see gen_workload --spec-out)')
    parser.add_argument('--trace', help='Session trace CSV; replaces the generated workload')
    parser.add_argument('--tensor', help='PLT tensor from build_oracle')
    parser.add_argument('--sessions', type=int, help='Override the workload session count')
    parser.add_argument('--update-interval', type=int, dest='update_interval', help='Model update interval (ms)')
    parser.add_argument('--topology', choices=['global', 'local'])
    parser.add_argument('--pops', type=int, help='Number of PoPs / agents')
    parser.add_argument('--delay', type=int, help='Manager/agent propagation delay (ms)')
    parser.add_argument('--feature-mask', dest='feature_mask', help="Comma list of bandwidth,rtt,loss,complexity")
    parser.add_argument('--knob-mask', dest='knob_mask', help="Comma list of knobs, 'all' or 'none'")
    parser.add_argument('--epsilon', type=float, help='Degree of randomness')
    parser.add_argument('--bootstrap', choices=['lhc', 'random', 'ranked'])
    parser.add_argument('--nc-k', type=int, dest='nc_k', help='Network classes; 0 picks k automatically')
    parser.add_argument('--max-leaf-nodes', type=int, dest='max_leaf_nodes')
    parser.add_argument('--drift-reset', action='store_true', dest='drift_reset',
                        help='Reset classes whose incumbent PLT stream shows a changepoint')
    parser.add_argument('--noise-off', action='store_true', dest='noise_off')
    parser.add_argument('--drift-at', type=int, dest='drift_at', help='Inject oracle drift at this time (ms)')
    parser.add_argument('--drift-param', action='append', dest='drift_param', metavar='NAME=VALUE',
                        help='Oracle parameter override after the drift; repeatable')
    parser.add_argument('-o', '--output', help='Results CSV path')


def build_config(options: Dict[str, Any], default_name: str = 'results.csv') -> ExperimentConfig:
    """Resolve an ExperimentConfig from profile, settings, --config and flags."""
    try:
        profile = lab_settings.get_profile(options.get('profile'))
        if options.get('config'):
            cfg = ExperimentConfig.load(options['config'])
        else:
            workload = WorkloadSpec(session_count=profile['session_count'], client_count=profile['client_count'],
                                    arrival_rate_per_min=profile['arrival_rate_per_min'])
            cfg = ExperimentConfig(
                seed=lab_settings.get_lab_setting('LAB_DEFAULT_SEED'),
                output=default_output(default_name),
                workload=workload,
                update_interval_ms=lab_settings.get_lab_setting('LAB_UPDATE_INTERVAL_MS'),
                delay_ms=lab_settings.get_lab_setting('LAB_PROPAGATION_DELAY_MS'),
                nc_k=profile['nc_k'],
            )
            cfg = replace(cfg, ensemble=replace(cfg.ensemble, epsilon=lab_settings.get_lab_setting('LAB_EPSILON')))

        changes: Dict[str, Any] = {}
        if options.get('workload'):
            changes['workload'] = WorkloadSpec.load(options['workload'])
        simple = {'algo': 'algo', 'seed': 'seed', 'trace': 'trace_path', 'tensor': 'tensor_path',
                  'update_interval': 'update_interval_ms', 'topology': 'topology', 'pops': 'pop_count',
                  'delay': 'delay_ms', 'nc_k': 'nc_k', 'output': 'output', 'drift_at': 'drift_at_ms'}
        for option, name in simple.items():
            if options.get(option) is not None:
                changes[name] = options[option]
        if options.get('feature_mask') is not None:
            changes['feature_mask'] = parse_names(options['feature_mask'])
        if options.get('knob_mask') is not None:
            changes['knob_mask'] = parse_names(options['knob_mask'])
        if options.get('drift_param'):
            changes['drift_params'] = parse_assignments(options['drift_param'])
        cfg = replace(cfg, **changes)

        if options.get('sessions') is not None:
            cfg = replace(cfg, workload=replace(cfg.workload, session_count=options['sessions']))
        ensemble_changes = {}
        if options.get('epsilon') is not None:
            ensemble_changes['epsilon'] = options['epsilon']
        if options.get('bootstrap') is not None:
            ensemble_changes['bootstrap'] = options['bootstrap']
        if options.get('drift_reset'):
            ensemble_changes['drift_reset'] = True
        if ensemble_changes:
            cfg = replace(cfg, ensemble=replace(cfg.ensemble, **ensemble_changes))
        if options.get('max_leaf_nodes') is not None:
            cfg = replace(cfg, tree=replace(cfg.tree, max_leaf_nodes=options['max_leaf_nodes']))
        if options.get('noise_off'):
            cfg = replace(cfg, oracle=cfg.oracle.without_noise())
        cfg.validate()
        return cfg
    except ConfigError as e:
        raise config_error(str(e)) from e
    except (ValueError, TypeError) as e:
        raise config_error(f"Invalid experiment configuration: {e}") from e


def ensure_parent(path: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
