"""Writing run logs to disk.

A run directory holds ``run.csv`` (one row per control cycle, columns in
``COLUMNS`` order), ``frames.csv`` (the per-frame edge extraction),
``timing.csv`` (stage timings in seconds) and ``summary.json``.  Floats are
written with ``repr`` so ``read_log`` reproduces the logged values exactly.
"""
import csv
import json
import logging
from pathlib import Path

import numpy as np

from .harness import COLUMNS, TIMING_COLUMNS, RunLog, batch_statistics, window_means

logger = logging.getLogger(__name__)

FRAME_COLUMNS = ('frame', 'r1', 'theta1', 'r2', 'theta2', 'valid1', 'valid2', 'd_l1l2')
BATCH_CHANNELS = ('err_r', 'err_theta', 'err_v_x')


def export_log(log, path, *, csv_files=True, plots=False):
    """Write ``log`` into the directory ``path``; returns the written file paths"""
    path = Path(path)
    written = []
    try:
        path.mkdir(parents=True, exist_ok=True)
        if csv_files:
            data = log.data
            written.append(_write_csv(path / 'run.csv', COLUMNS, data))
            frames = np.column_stack(
                [np.arange(len(data), dtype=float)] + [log.column(name) for name in FRAME_COLUMNS[1:]]
            )
            written.append(_write_csv(path / 'frames.csv', FRAME_COLUMNS, frames))
            written.append(_write_csv(path / 'timing.csv', TIMING_COLUMNS, log.timings))
        summary_path = path / 'summary.json'
        summary_path.write_text(json.dumps(log.summary(), indent=2) + '\n')
        written.append(summary_path)
    except OSError as exc:
        raise OSError(f'Cannot write run log to {path}: {exc}') from exc
    if plots and len(log):
        written.extend(_plot_run(log, path))
    for item in written:
        logger.info('Wrote %s', item)
    return written


def read_log(path, *, name=None, mode='vs-nmpc', seed=0):
    """Read a ``run.csv`` (or the run directory holding it) back into a RunLog"""
    path = Path(path)
    if path.is_dir():
        path = path / 'run.csv'
    try:
        with path.open(newline='') as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            rows = [[float(value) for value in row] for row in reader]
    except OSError as exc:
        raise OSError(f'Cannot read run log {path}: {exc}') from exc
    if header != COLUMNS:
        raise ValueError(f'{path} does not have the run log columns')
    timing_path = path.parent / 'timing.csv'
    timings = None
    if timing_path.exists():
        with timing_path.open(newline='') as fh:
            reader = csv.reader(fh)
            next(reader)
            timings = [[float(value) for value in row] for row in reader]
    return RunLog(path.parent.name if name is None else name, mode=mode, seed=seed, data=rows, timings=timings)


def export_batch(logs, path, *, plots=False, window=5.0):
    """Export every run of a batch plus the mean/std statistics of the error channels"""
    path = Path(path)
    written = []
    for log in logs:
        written.extend(export_log(log, path / log.name, plots=False))
    columns = ['time']
    stats = []
    window_summary = {}
    t = None
    for channel in BATCH_CHANNELS:
        t, mean, std = batch_statistics(logs, channel)
        columns += [f'mean_{channel}', f'std_{channel}']
        stats += [mean, std]
        means = window_means(t, mean, window)
        window_summary[channel] = {
            'window_means': means.tolist(),
            'decreasing': bool(np.all(np.diff(means[np.isfinite(means)]) <= 0)),
        }
    summary = {
        'runs': [log.summary() for log in logs],
        'window': window,
        'channels': window_summary,
        'all_within_simulation_bounds': all(log.summary()['within_simulation_bounds'] for log in logs if len(log)),
    }
    try:
        path.mkdir(parents=True, exist_ok=True)
        written.append(_write_csv(path / 'batch.csv', columns, np.column_stack([t] + stats)))
        summary_path = path / 'batch_summary.json'
        summary_path.write_text(json.dumps(summary, indent=2) + '\n')
        written.append(summary_path)
    except OSError as exc:
        raise OSError(f'Cannot write batch results to {path}: {exc}') from exc
    if plots:
        written.extend(_plot_batch(t, dict(zip(columns[1:], stats)), path))
    return written


def _write_csv(path, columns, data):
    with path.open('w', newline='') as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in data:
            writer.writerow([repr(float(value)) for value in row])
    return path


def _pyplot():
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt
    return plt


def _plot_run(log, path):
    plt = _pyplot()
    t = log.time
    written = []

    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8, 7))
    for ax, channel, label in zip(axes, BATCH_CHANNELS, ('r error', 'theta error [rad]', 'v_x error [m/s]')):
        ax.plot(t, log.column(channel))
        ax.set_ylabel(label)
        ax.grid(True)
    lost = log.column('feature_valid') == 0
    if lost.any():
        for ax in axes:
            ax.fill_between(t, 0, 1, where=lost, color='tab:orange', alpha=0.3, transform=ax.get_xaxis_transform())
    axes[-1].set_xlabel('time [s]')
    written.append(_save(fig, path / 'errors.png', plt))

    fig, axes = plt.subplots(4, 1, sharex=True, figsize=(8, 8))
    for ax, (true, command) in zip(axes, (('v_x', 'nu_ref_x'), ('v_y', 'nu_ref_y'), ('v_z', 'nu_ref_z'),
                                          ('omega_z', 'nu_ref_omega_z'))):
        ax.plot(t, log.column(true), label=true)
        ax.plot(t, log.column(command), '--', label='applied')
        ax.legend(loc='upper right')
        ax.grid(True)
    axes[-1].set_xlabel('time [s]')
    written.append(_save(fig, path / 'velocity.png', plt))

    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(t, log.column('z'))
    ax.axhline(4.5, color='k', linestyle=':')
    ax.set_xlabel('time [s]')
    ax.set_ylabel('z [m]')
    ax.grid(True)
    written.append(_save(fig, path / 'altitude.png', plt))
    return written


def _plot_batch(t, stats, path):
    plt = _pyplot()
    fig, axes = plt.subplots(len(BATCH_CHANNELS), 1, sharex=True, figsize=(8, 7))
    for ax, channel in zip(axes, BATCH_CHANNELS):
        mean, std = stats[f'mean_{channel}'], stats[f'std_{channel}']
        ax.plot(t, mean, label=f'mean |{channel}|')
        ax.fill_between(t, mean - std, mean + std, alpha=0.3)
        ax.legend(loc='upper right')
        ax.grid(True)
    axes[-1].set_xlabel('time [s]')
    return [_save(fig, path / 'batch.png', plt)]


def _save(fig, path, plt):
    try:
        fig.savefig(path, dpi=100)
    except OSError as exc:
        raise OSError(f'Cannot write plot {path}: {exc}') from exc
    finally:
        plt.close(fig)
    return path
