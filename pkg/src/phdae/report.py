"""Report emission: delimited files plus rendered figures.

Every report path writes a CSV (the machine-readable artifact) and a PNG
figure next to it. Numbers are serialized with repr so reruns with the
same seed produce byte-identical files; figures are written through the
Agg-independent Figure API with pinned metadata for the same reason.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

from .dcnet import PARAM_NAMES, ExperimentReport

__all__ = [
    "write_table1_csv",
    "write_recovery_csv",
    "write_trajectory_csv",
    "write_training_log_csv",
    "render_table1",
    "render_recovery",
    "render_trajectory",
    "render_training_log",
]

_PNG_METADATA = {"Software": "phdae"}


def _fmt(v) -> str:
    return repr(float(v))


def _write_rows(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(c) if isinstance(c, (str, int)) else _fmt(c)
                              for c in row) + "\n")


def write_table1_csv(report: ExperimentReport, path) -> None:
    _write_rows(path, ["snr_db", "noise_std", "nrms"],
                [(r["snr_db"], r["noise_std"], r["nrms"])
                 for r in report.records])


def write_recovery_csv(report: ExperimentReport, path) -> None:
    rows = [
        (r["run"], name, r["estimates"][name], r["deviations_pct"][name])
        for r in report.records
        for name in PARAM_NAMES
    ]
    _write_rows(path, ["run", "parameter", "estimate", "deviation_pct"], rows)


def write_trajectory_csv(times, y_meas, y_sim, path) -> None:
    y_meas = np.atleast_2d(np.asarray(y_meas).T).T
    y_sim = np.atleast_2d(np.asarray(y_sim).T).T
    n_ch = y_meas.shape[1]
    header = ["t"]
    for i in range(1, n_ch + 1):
        header += [f"y_measured{i}", f"y_simulated{i}", f"error{i}"]
    rows = []
    for k, t in enumerate(np.asarray(times)):
        row = [t]
        for i in range(n_ch):
            row += [y_meas[k, i], y_sim[k, i], y_meas[k, i] - y_sim[k, i]]
        rows.append(row)
    _write_rows(path, header, rows)


def write_training_log_csv(history, path) -> None:
    _write_rows(path, ["epoch", "train_loss", "val_nrms", "lr"],
                [(rec.epoch, rec.train_loss, rec.val_nrms, rec.lr)
                 for rec in history])


def _save(fig: Figure, path) -> None:
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)


def render_table1(report: ExperimentReport, path) -> None:
    snr = [r["snr_db"] for r in report.records]
    nrms = [r["nrms"] for r in report.records]
    fig = Figure(figsize=(5, 3.5))
    ax = fig.subplots()
    ax.plot(snr, nrms, "o-", label="test NRMS")
    noise = [r["noise_std"] for r in report.records]
    if all(v is not None for v in noise):
        ax.plot(snr, 10.0 ** (-np.asarray(snr) / 20.0), "k--",
                label=r"noise floor $10^{-\mathrm{SNR}/20}$")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("NRMS")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def render_recovery(report: ExperimentReport, path) -> None:
    data = [
        [r["deviations_pct"][name] for r in report.records]
        for name in PARAM_NAMES
    ]
    fig = Figure(figsize=(6, 3.5))
    ax = fig.subplots()
    ax.boxplot(data, tick_labels=list(PARAM_NAMES))
    ax.set_ylabel("normalized deviation (%)")
    ax.set_yscale("log")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def render_trajectory(times, y_meas, y_sim, path, noise_std=None) -> None:
    times = np.asarray(times)
    y_meas = np.atleast_2d(np.asarray(y_meas).T).T
    y_sim = np.atleast_2d(np.asarray(y_sim).T).T
    fig = Figure(figsize=(7, 4.5))
    ax_top, ax_bot = fig.subplots(2, 1, sharex=True)
    ax_top.plot(times, y_meas[:, 0], ".", ms=2, alpha=0.5, label="measured")
    ax_top.plot(times, y_sim[:, 0], "-", lw=1, label="simulated")
    ax_top.set_ylabel("output")
    ax_top.legend(loc="upper right")
    err = y_meas[:, 0] - y_sim[:, 0]
    ax_bot.plot(times, err, "-", lw=0.8)
    if noise_std is not None and noise_std > 0:
        ax_bot.axhline(noise_std, color="k", ls=":", lw=1)
        ax_bot.axhline(-noise_std, color="k", ls=":", lw=1)
    ax_bot.set_xlabel("time (s)")
    ax_bot.set_ylabel("error")
    fig.tight_layout()
    _save(fig, path)


def render_training_log(history, path) -> None:
    fig = Figure(figsize=(6, 3.5))
    ax = fig.subplots()
    epochs = [rec.epoch for rec in history]
    ax.semilogy(epochs, [rec.train_loss for rec in history], label="train loss")
    ax.semilogy(epochs, [rec.val_nrms for rec in history], label="val NRMS")
    ax.set_xlabel("epoch")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
