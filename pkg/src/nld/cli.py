"""Reproducible experiment runner.

Five subcommands expose the package as seeded, config-driven experiments:

  nld verify-theory   decay/stability checks on a balanced random kernel
  nld evolve          any stepper, trajectory CSV out
  nld spectrum        eigenvalue report of a matrix CSV or checkpoint
  nld train           one network training run with artifacts
  nld compare         formulation sweep with the loss-ordering check

Each run takes one JSON config (schema-validated, unknown keys rejected),
merges it over defaults, and emits artifacts plus a RunReport JSON whose
config echo is sufficient to reproduce the run byte-for-byte; the only
nondeterministic field is the wall time.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import jsonschema
import numpy as np

from . import dynamics, kernels, net, operators
from .errors import BlowUpError, NldError
from .fields import FeatureField, load_matrix_csv, save_matrix_csv
from .rng import SplitMix64, derive_seed
from .spectrum import eig_symmetric, spectrum_report

DEFAULT_OUT = "nld-out"

RUN_REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["command", "config", "checks", "artifacts", "wall_time_seconds", "overall"],
    "additionalProperties": False,
    "properties": {
        "command": {"type": "string"},
        "config": {"type": "object"},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "status"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "status": {"enum": ["pass", "fail", "soft", "expected_fail"]},
                    "measured": {"type": ["number", "string", "null"]},
                    "threshold": {"type": ["number", "null"]},
                    "detail": {"type": ["string", "null"]},
                },
            },
        },
        "artifacts": {"type": "array", "items": {"type": "string"}},
        "wall_time_seconds": {"type": "number"},
        "overall": {"enum": ["pass", "fail"]},
    },
}


@dataclass
class CheckResult:
    name: str
    status: str
    measured: object = None
    threshold: object = None
    detail: object = None

    def to_dict(self) -> dict:
        measured = self.measured
        if measured is not None and not isinstance(measured, str):
            measured = float(measured)
        return {
            "name": self.name,
            "status": self.status,
            "measured": measured,
            "threshold": None if self.threshold is None else float(self.threshold),
            "detail": self.detail,
        }


@dataclass
class RunReport:
    command: str
    config: dict
    checks: list = dc_field(default_factory=list)
    artifacts: list = dc_field(default_factory=list)
    wall_time_seconds: float = 0.0

    @property
    def overall(self) -> str:
        return "fail" if any(c.status == "fail" for c in self.checks) else "pass"

    def to_json_dict(self) -> dict:
        doc = {
            "command": self.command,
            "config": self.config,
            "checks": [c.to_dict() for c in self.checks],
            "artifacts": list(self.artifacts),
            "wall_time_seconds": float(self.wall_time_seconds),
            "overall": self.overall,
        }
        jsonschema.validate(doc, RUN_REPORT_SCHEMA)
        return doc


def _write_text(out_dir: Path, name: str, text: str) -> str:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / name, "w", newline="\n") as fh:
        fh.write(text)
    return name


def _write_bytes(out_dir: Path, name: str, blob: bytes) -> str:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / name, "wb") as fh:
        fh.write(blob)
    return name


def _finish(report: RunReport, out_dir: Path, started: float) -> RunReport:
    report.wall_time_seconds = time.monotonic() - started
    report.artifacts.append("report.json")
    doc = report.to_json_dict()
    _write_text(out_dir, "report.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return report


# ---------------------------------------------------------------------------
# Config plumbing.
# ---------------------------------------------------------------------------

_KERNEL_PROPS = {
    "variant": {"enum": ["gaussian", "dot_product", "rbf", "dirac_delta", "embedded"]},
    "bandwidth": {"type": ["number", "null"]},
    "theta": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    "inner": {"type": "object"},
}

_KERNEL_SCHEMA = {
    "type": "object",
    "required": ["variant"],
    "additionalProperties": False,
    "properties": _KERNEL_PROPS,
}

_TASK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "num_positions": {"type": "integer", "minimum": 1},
        "num_channels": {"type": "integer", "minimum": 1},
        "num_classes": {"type": "integer", "minimum": 2},
        "num_samples": {"type": "integer", "minimum": 2},
    },
}

_STAGE_SCHEMA = {
    "type": ["object", "null"],
    "required": ["formulation", "sub_blocks"],
    "additionalProperties": False,
    "properties": {
        "formulation": {"enum": ["proposed", "original"]},
        "sub_blocks": {"type": "integer", "minimum": 1},
        "placement": {"type": "integer", "minimum": 0},
        "kernel": _KERNEL_SCHEMA,
    },
}

_HYPER_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lr": {"type": "number", "minimum": 0},
        "momentum": {"type": "number", "minimum": 0},
        "weight_decay": {"type": "number", "minimum": 0},
        "epochs": {"type": "integer", "minimum": 1},
        "lr_drop_fracs": {"type": "array", "items": {"type": "number"}},
        "lr_drop_factor": {"type": "number", "exclusiveMinimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "val_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    },
}

_COMMON_PROPS = {
    "seed": {"type": "integer", "minimum": 0},
    "out_dir": {"type": ["string", "null"]},
}

CONFIG_SCHEMAS = {
    "verify-theory": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            **_COMMON_PROPS,
            "num_positions": {"type": "integer", "minimum": 2},
            "num_channels": {"type": "integer", "minimum": 1},
            "steps": {"type": "integer", "minimum": 3},
            "weight": {"type": "number"},
            "bandwidth": {"type": ["number", "null"]},
            "sinkhorn_tol": {"type": "number", "exclusiveMinimum": 0},
        },
    },
    "evolve": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            **_COMMON_PROPS,
            "stepper": {"enum": ["proposed", "original", "markov"]},
            "num_positions": {"type": "integer", "minimum": 1},
            "num_channels": {"type": "integer", "minimum": 1},
            "steps": {"type": "integer", "minimum": 0},
            "weight": {
                "anyOf": [
                    {"type": "number"},
                    {"type": "array", "items": {"type": "number"}, "minItems": 1},
                ]
            },
            "kernel": _KERNEL_SCHEMA,
            "normalization": {"enum": ["row", "sinkhorn"]},
            "record_states": {"type": "boolean"},
            "initial": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": ["normal", "uniform", "explicit"]},
                    "scale": {"type": "number"},
                    "values": {
                        "type": "array",
                        "items": {"type": "array", "items": {"type": "number"}},
                    },
                },
            },
        },
    },
    "spectrum": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            **_COMMON_PROPS,
            "input_path": {"type": "string"},
            "input_kind": {"enum": ["matrix_csv", "checkpoint"]},
            "sidecar_path": {"type": ["string", "null"]},
            "top_k": {"type": "integer", "minimum": 1},
        },
        "required": ["input_path"],
    },
    "train": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            **_COMMON_PROPS,
            "task": _TASK_SCHEMA,
            "net": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "trunk_blocks": {"type": "integer", "minimum": 1},
                    "hidden_channels": {"type": "integer", "minimum": 1},
                    "block_gain": {"type": "number"},
                    "stage": _STAGE_SCHEMA,
                },
            },
            "hyper": _HYPER_SCHEMA,
        },
    },
    "compare": {
        "type": "object",
        "additionalProperties": False,
        "properties": {
            **_COMMON_PROPS,
            "task": _TASK_SCHEMA,
            "net": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "trunk_blocks": {"type": "integer", "minimum": 1},
                    "hidden_channels": {"type": "integer", "minimum": 1},
                    "block_gain": {"type": "number"},
                    "placement": {"type": "integer", "minimum": 0},
                    "kernel": _KERNEL_SCHEMA,
                },
            },
            "variants": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["formulation", "sub_blocks"],
                    "properties": {
                        "formulation": {"enum": ["proposed", "original"]},
                        "sub_blocks": {"type": "integer", "minimum": 1},
                    },
                },
            },
            "hyper": _HYPER_SCHEMA,
            "parallel": {"type": "boolean"},
        },
    },
}

_DEFAULT_HYPER = {
    "lr": 0.1,
    "momentum": 0.9,
    "weight_decay": 1e-4,
    "epochs": 200,
    "lr_drop_fracs": [81.0 / 164.0, 122.0 / 164.0],
    "lr_drop_factor": 0.1,
    "batch_size": 32,
    "val_fraction": 0.25,
}

CONFIG_DEFAULTS = {
    "verify-theory": {
        "seed": 0,
        "out_dir": None,
        "num_positions": 16,
        "num_channels": 2,
        "steps": 120,
        "weight": 0.5,
        "bandwidth": None,
        "sinkhorn_tol": 1e-13,
    },
    "evolve": {
        "seed": 0,
        "out_dir": None,
        "stepper": "markov",
        "num_positions": 8,
        "num_channels": 1,
        "steps": 50,
        "weight": 1.0,
        "kernel": {"variant": "rbf", "bandwidth": None},
        "normalization": "sinkhorn",
        "record_states": False,
        "initial": {"kind": "normal", "scale": 1.0},
    },
    "spectrum": {
        "seed": 0,
        "out_dir": None,
        "input_kind": "matrix_csv",
        "sidecar_path": None,
        "top_k": 32,
    },
    "train": {
        "seed": 0,
        "out_dir": None,
        "task": {"num_positions": 10, "num_channels": 5, "num_classes": 2, "num_samples": 512},
        "net": {
            "trunk_blocks": 3,
            "hidden_channels": 32,
            "block_gain": 1.0,
            "stage": {
                "formulation": "proposed",
                "sub_blocks": 4,
                "placement": 1,
                "kernel": {"variant": "gaussian"},
            },
        },
        "hyper": dict(_DEFAULT_HYPER),
    },
    "compare": {
        "seed": 0,
        "out_dir": None,
        "task": {"num_positions": 10, "num_channels": 5, "num_classes": 2, "num_samples": 512},
        "net": {
            "trunk_blocks": 3,
            "hidden_channels": 32,
            "block_gain": 1.0,
            "placement": 1,
            "kernel": {"variant": "gaussian"},
        },
        "variants": [
            {"formulation": "proposed", "sub_blocks": 1},
            {"formulation": "proposed", "sub_blocks": 2},
            {"formulation": "proposed", "sub_blocks": 4},
            {"formulation": "proposed", "sub_blocks": 8},
            {"formulation": "original", "sub_blocks": 4},
        ],
        "hyper": dict(_DEFAULT_HYPER),
        "parallel": False,
    },
}


class ConfigError(NldError):
    pass


def _merge_defaults(defaults, override):
    if isinstance(defaults, dict) and isinstance(override, dict):
        merged = {k: copy.deepcopy(v) for k, v in defaults.items()}
        for k, v in override.items():
            merged[k] = _merge_defaults(defaults.get(k), v) if k in defaults else copy.deepcopy(v)
        return merged
    return copy.deepcopy(override)


def resolve_config(command: str, raw: dict, seed=None, out=None) -> dict:
    """Validate, merge over defaults, apply flag overrides, fix out_dir."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMAS[command])
    except jsonschema.ValidationError as err:
        raise ConfigError(f"config rejected: {err.message}") from err
    config = _merge_defaults(CONFIG_DEFAULTS[command], raw)
    if seed is not None:
        config["seed"] = int(seed)
    if out is not None:
        config["out_dir"] = str(out)
    if config.get("out_dir") is None:
        config["out_dir"] = os.environ.get("NLD_OUT", DEFAULT_OUT)
    return config


def kernel_spec_from_config(doc: dict) -> kernels.AffinityKernelSpec:
    variant = doc.get("variant")
    if variant == "embedded":
        theta = doc.get("theta")
        inner = doc.get("inner")
        if theta is None or inner is None:
            raise ConfigError("embedded kernel config needs theta and inner")
        return kernels.AffinityKernelSpec.embedded(
            np.array(theta, dtype=np.float64), kernel_spec_from_config(inner)
        )
    try:
        return kernels.AffinityKernelSpec(variant, bandwidth=doc.get("bandwidth"))
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _seeded_field(seed: int, label: str, M: int, d: int, kind="normal", scale=1.0) -> FeatureField:
    rng = SplitMix64(derive_seed(seed, label))
    if kind == "normal":
        return FeatureField(scale * rng.normals((M, d)))
    if kind == "uniform":
        return FeatureField(rng.uniforms((M, d), -scale, scale))
    raise ConfigError(f"unknown initial kind {kind!r}")


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------


def cmd_verify_theory(config: dict) -> RunReport:
    started = time.monotonic()
    out_dir = Path(config["out_dir"])
    report = RunReport("verify-theory", config)
    seed = config["seed"]
    M = config["num_positions"]
    d = config["num_channels"]
    steps = config["steps"]
    w = config["weight"]

    X = _seeded_field(seed, "features", M, d)
    K = kernels.symmetric_stochastic_kernel(
        X, bandwidth=config["bandwidth"], tol=config["sinkhorn_tol"]
    )
    report.checks.append(
        CheckResult(
            "kernel_flags",
            "pass" if (K.symmetric and K.doubly_stochastic) else "fail",
            detail=json.dumps(K.flags(), sort_keys=True),
        )
    )

    Z0 = _seeded_field(seed, "state", M, d)
    const = FeatureField(np.ones((M, d)) * 0.7)
    dev_const = float(np.max(np.abs(operators.apply_diffusion(K, const).values)))
    report.checks.append(
        CheckResult(
            "constant_annihilation",
            "pass" if dev_const <= 1e-12 else "fail",
            measured=dev_const,
            threshold=1e-12,
        )
    )
    LZ = operators.apply_diffusion(K, Z0).values
    mean_zero = float(np.max(np.abs(LZ.sum(axis=0))))
    report.checks.append(
        CheckResult(
            "mean_zero",
            "pass" if mean_zero <= 1e-10 else "fail",
            measured=mean_zero,
            threshold=1e-10,
        )
    )
    quad = float(np.sum(Z0.values * LZ))
    report.checks.append(
        CheckResult(
            "quadratic_form_nonpositive",
            "pass" if quad <= 1e-12 else "fail",
            measured=quad,
            threshold=1e-12,
        )
    )

    # One Markov step's variance drop against the energy identity.
    Z1 = FeatureField(K.entries @ Z0.values)
    drop = dynamics._stats(Z0.values).variance - dynamics._stats(Z1.values).variance
    predicted = dynamics.variance_dissipation(K, Z0)
    energy_err = abs(drop - predicted)
    report.checks.append(
        CheckResult(
            "energy_identity",
            "pass" if energy_err <= 1e-10 else "fail",
            measured=energy_err,
            threshold=1e-10,
        )
    )

    verdict = dynamics.cfl_verdict(K, w)
    report.checks.append(
        CheckResult(
            "cfl_radius",
            "pass",
            measured=verdict.spectral_radius,
            detail="stable" if verdict.stable else "unstable",
        )
    )

    traj = dynamics.evolve(Z0, dynamics.ProposedStepper(K, w), steps)
    mean_rep = dynamics.verify_mean_preservation(traj)
    if mean_rep.passed:
        mean_status = "pass"
    else:
        # The preservation theorem assumes a stable weight; an unstable run
        # amplifies roundoff in the column means past the absolute tolerance.
        mean_status = "expected_fail" if not verdict.stable else "fail"
    report.checks.append(
        CheckResult(
            "mean_preservation",
            mean_status,
            measured=mean_rep.max_deviation,
            threshold=mean_rep.tolerance,
        )
    )
    var_rep = dynamics.verify_variance_decay(traj)
    if var_rep.passed:
        var_status = "pass"
    else:
        var_status = "expected_fail" if not verdict.stable else "fail"
    report.checks.append(
        CheckResult(
            "variance_decay",
            var_status,
            measured=var_rep.max_increase,
            threshold=var_rep.tolerance,
            detail=None
            if var_rep.first_violation_step is None
            else f"first increase at step {var_rep.first_violation_step}",
        )
    )

    vals, vecs = eig_symmetric(K.entries)
    lam2 = float(vals[1])
    factor = 1.0 - w * (1.0 - lam2)
    min_factor = float(np.min(1.0 + w * (vals - 1.0)))
    if 0.0 < factor < 1.0 and min_factor > 0.0:
        prediction = -np.log(factor)
        fit = dynamics.estimate_decay_rate(traj)
        report.checks.append(
            CheckResult(
                "decay_rate_vs_gap",
                "pass" if fit.lambda_hat >= prediction - 1e-6 else "fail",
                measured=fit.lambda_hat,
                threshold=prediction,
                detail=f"r_squared {fit.r_squared:.6f}",
            )
        )
        Zeig = FeatureField(np.tile(vecs[:, 1][:, None], (1, d)))
        eig_traj = dynamics.evolve(Zeig, dynamics.ProposedStepper(K, w), steps)
        eig_fit = dynamics.estimate_decay_rate(eig_traj)
        report.checks.append(
            CheckResult(
                "eigenvector_rate_equality",
                "pass" if abs(eig_fit.lambda_hat - prediction) <= 1e-6 else "fail",
                measured=eig_fit.lambda_hat,
                threshold=prediction,
            )
        )
    else:
        report.checks.append(
            CheckResult(
                "decay_rate_vs_gap",
                "soft",
                detail="contraction spectrum not positive; no exponential prediction",
            )
        )

    m = dynamics.poincare_constant(K)
    report.checks.append(
        CheckResult("poincare_positive", "pass" if m > 0 else "fail", measured=m, threshold=0.0)
    )
    centered = Z0.values - Z0.values.mean(axis=0)
    sq = np.sum(centered * centered, axis=1)
    pair = sq[:, None] + sq[None, :] - 2.0 * (centered @ centered.T)
    lhs = float(np.sum(K.entries * pair))
    rhs = 2.0 * m * float(np.sum(centered * centered))
    report.checks.append(
        CheckResult(
            "poincare_inequality",
            "pass" if lhs >= rhs * (1.0 - 1e-9) - 1e-12 else "fail",
            measured=lhs,
            threshold=rhs,
        )
    )

    report.artifacts.append(_write_text(out_dir, "trajectory.csv", traj.to_csv()))
    return _finish(report, out_dir, started)


def cmd_evolve(config: dict) -> RunReport:
    started = time.monotonic()
    out_dir = Path(config["out_dir"])
    report = RunReport("evolve", config)
    seed = config["seed"]
    M = config["num_positions"]
    d = config["num_channels"]
    init = config["initial"]
    if init["kind"] == "explicit":
        if "values" not in init:
            raise ConfigError("explicit initial state needs values")
        Z0 = FeatureField(np.array(init["values"], dtype=np.float64))
        if Z0.num_positions != M or Z0.num_channels != d:
            raise ConfigError("explicit initial state does not match num_positions/num_channels")
    else:
        Z0 = _seeded_field(seed, "state", M, d, init["kind"], init.get("scale", 1.0))

    spec = kernel_spec_from_config(config["kernel"])
    weight = config["weight"]
    if config["stepper"] == "original":
        stepper = dynamics.OriginalStepper(spec, weight)
    else:
        raw = kernels.build_kernel_matrix(Z0, spec)
        if config["normalization"] == "sinkhorn":
            K = kernels.sinkhorn_normalize(raw, tol=1e-13)
        else:
            K = kernels.normalize_rows(raw)
        if config["stepper"] == "markov":
            stepper = dynamics.MarkovStepper(K)
        else:
            stepper = dynamics.ProposedStepper(K, weight)

    try:
        traj = dynamics.evolve(Z0, stepper, config["steps"], config["record_states"])
        report.checks.append(
            CheckResult(
                "finite_trajectory",
                "pass",
                measured=traj.per_step_stats[-1].l2_norm,
                detail=f"{traj.steps} steps",
            )
        )
    except BlowUpError as err:
        traj = err.record
        report.checks.append(
            CheckResult(
                "finite_trajectory",
                "fail",
                measured=err.max_abs,
                threshold=dynamics.BLOWUP_LIMIT,
                detail=f"blow-up at step {err.step}",
            )
        )
    report.artifacts.append(_write_text(out_dir, "trajectory.csv", traj.to_csv()))
    return _finish(report, out_dir, started)


def cmd_spectrum(config: dict) -> RunReport:
    started = time.monotonic()
    out_dir = Path(config["out_dir"])
    report = RunReport("spectrum", config)
    path = Path(config["input_path"])
    top_k = config["top_k"]
    try:
        if config["input_kind"] == "matrix_csv":
            A = load_matrix_csv(path.read_text())
            if A.ndim != 2 or A.shape[0] != A.shape[1]:
                raise ValueError(f"matrix is {A.shape[0]} rows x {A.shape[1]} cols, not square")
            targets = {"matrix": A}
        else:
            sidecar_path = config.get("sidecar_path") or str(path.with_suffix(".json"))
            sidecar = json.loads(Path(sidecar_path).read_text())
            params = net.checkpoint_from_bytes(path.read_bytes(), sidecar)
            targets = {
                name: W for name, W in params.items() if name.startswith("stage")
            }
            if not targets:
                raise ValueError("checkpoint holds no stage weight tensors")
    except (OSError, ValueError, json.JSONDecodeError) as err:
        report.checks.append(CheckResult("input_readable", "fail", detail=str(err)))
        return _finish(report, out_dir, started)
    report.checks.append(CheckResult("input_readable", "pass", detail=f"{len(targets)} matrix(es)"))

    for name, W in targets.items():
        rep = spectrum_report(W, top_k=top_k)
        stem = "spectrum" if name == "matrix" else f"spectrum_{name}"
        report.artifacts.append(
            _write_text(out_dir, f"{stem}.json", json.dumps(rep.to_json_dict(), indent=2, sort_keys=True) + "\n")
        )
        report.artifacts.append(_write_text(out_dir, f"{stem}.csv", rep.to_csv()))
        report.checks.append(
            CheckResult(
                f"classified_{name}",
                "pass",
                measured=rep.classification,
                detail=f"pos {rep.num_positive} / neg {rep.num_negative}",
            )
        )
    return _finish(report, out_dir, started)


def _net_config_from(doc: dict, task_doc: dict, stage_doc, placement_key="placement") -> net.NetworkConfig:
    stage = None
    if stage_doc is not None:
        stage = net.StageConfig(
            formulation=stage_doc["formulation"],
            sub_blocks=stage_doc["sub_blocks"],
            kernel=kernel_spec_from_config(stage_doc.get("kernel", {"variant": "gaussian"})),
            placement=stage_doc.get(placement_key, 1),
        )
    return net.NetworkConfig.with_stage(
        task_doc["num_positions"],
        task_doc["num_channels"],
        task_doc["num_classes"],
        doc["trunk_blocks"],
        doc["hidden_channels"],
        stage,
        doc.get("block_gain", 1.0),
    )


def _hyper_from(doc: dict) -> net.Hyper:
    return net.Hyper(
        lr=doc["lr"],
        momentum=doc["momentum"],
        weight_decay=doc["weight_decay"],
        epochs=doc["epochs"],
        lr_drop_fracs=tuple(doc["lr_drop_fracs"]),
        lr_drop_factor=doc["lr_drop_factor"],
        batch_size=doc["batch_size"],
        val_fraction=doc["val_fraction"],
    )


def _spectra_checks(report: RunReport, history, config_formulation: str, out_dir: Path, prefix=""):
    """Soft sign-majority expectations, per the qualitative findings."""
    if history.diverged or not history.final_stage_weights:
        return
    reports = net.extract_stage_spectra(history)
    pos = sum(r.num_positive for r in reports)
    neg = sum(r.num_negative for r in reports)
    if config_formulation == "proposed":
        ok = pos > neg
        name = f"{prefix}spectra_majority_positive"
    else:
        ok = neg > pos
        name = f"{prefix}spectra_majority_negative"
    report.checks.append(
        CheckResult(name, "soft", measured=f"pos {pos} / neg {neg}", detail="pass" if ok else "miss")
    )


def cmd_train(config: dict) -> RunReport:
    started = time.monotonic()
    out_dir = Path(config["out_dir"])
    report = RunReport("train", config)
    task_doc = config["task"]
    task = net.generate_task(
        task_doc["num_positions"],
        task_doc["num_channels"],
        task_doc["num_classes"],
        task_doc["num_samples"],
        config["seed"],
    )
    net_config = _net_config_from(config["net"], task_doc, config["net"]["stage"])
    hyper = _hyper_from(config["hyper"])
    history = net.train(net_config, task, hyper, seed=config["seed"])

    report.checks.append(
        CheckResult(
            "converged",
            "pass" if not history.diverged else "soft",
            detail="diverged" if history.diverged else None,
        )
    )
    if history.per_epoch and not history.diverged:
        last = history.per_epoch[-1]
        report.checks.append(
            CheckResult("final_train_loss", "pass", measured=last.train_loss)
        )
        report.checks.append(
            CheckResult("final_train_acc", "pass", measured=last.train_acc)
        )
    if net_config.stages:
        _spectra_checks(report, history, net_config.stages[0].formulation, out_dir)

    report.artifacts.append(_write_text(out_dir, "history.csv", history.to_csv()))
    blob, sidecar = net.checkpoint_bytes(history.final_params)
    report.artifacts.append(_write_bytes(out_dir, "checkpoint.bin", blob))
    report.artifacts.append(
        _write_text(out_dir, "checkpoint.json", json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    )
    if net_config.stages and not history.diverged:
        for idx, rep in enumerate(net.extract_stage_spectra(history)):
            report.artifacts.append(
                _write_text(
                    out_dir,
                    f"spectrum_sub{idx}.json",
                    json.dumps(rep.to_json_dict(), indent=2, sort_keys=True) + "\n",
                )
            )
    return _finish(report, out_dir, started)


def cmd_compare(config: dict) -> RunReport:
    started = time.monotonic()
    out_dir = Path(config["out_dir"])
    report = RunReport("compare", config)
    task_doc = config["task"]
    task = net.generate_task(
        task_doc["num_positions"],
        task_doc["num_channels"],
        task_doc["num_classes"],
        task_doc["num_samples"],
        config["seed"],
    )
    hyper = _hyper_from(config["hyper"])

    def run_variant(variant):
        stage_doc = {
            "formulation": variant["formulation"],
            "sub_blocks": variant["sub_blocks"],
            "placement": config["net"]["placement"],
            "kernel": config["net"]["kernel"],
        }
        net_config = _net_config_from(config["net"], task_doc, stage_doc)
        return net.train(net_config, task, hyper, seed=config["seed"])

    variants = config["variants"]
    if config["parallel"] and len(variants) > 1:
        with ThreadPoolExecutor(max_workers=min(4, len(variants))) as pool:
            histories = list(pool.map(run_variant, variants))
    else:
        histories = [run_variant(v) for v in variants]

    rows = ["formulation,sub_blocks,final_train_loss,final_val_acc,diverged"]
    results = {}
    for variant, history in zip(variants, histories):
        key = (variant["formulation"], variant["sub_blocks"])
        if history.diverged or not history.per_epoch:
            loss, vacc = float("inf"), float("nan")
        else:
            loss = history.per_epoch[-1].train_loss
            vacc = history.per_epoch[-1].val_acc
        results[key] = (loss, history)
        rows.append(
            f"{variant['formulation']},{variant['sub_blocks']},{loss!r},{vacc!r},{str(history.diverged).lower()}"
        )
        _spectra_checks(
            report,
            history,
            variant["formulation"],
            out_dir,
            prefix=f"{variant['formulation']}_N{variant['sub_blocks']}_",
        )
    report.artifacts.append(_write_text(out_dir, "comparison.csv", "\n".join(rows) + "\n"))

    for variant, history in zip(variants, histories):
        name = f"history_{variant['formulation']}_N{variant['sub_blocks']}.csv"
        report.artifacts.append(_write_text(out_dir, name, history.to_csv()))

    sub_counts = sorted({v["sub_blocks"] for v in variants})
    for n in sub_counts:
        if n < 2:
            continue
        if ("proposed", n) in results and ("original", n) in results:
            p_loss = results[("proposed", n)][0]
            o_loss = results[("original", n)][0]
            report.checks.append(
                CheckResult(
                    f"ordering_N{n}",
                    "pass" if p_loss <= o_loss else "fail",
                    measured=p_loss,
                    threshold=o_loss if np.isfinite(o_loss) else None,
                    detail=f"original loss {o_loss!r}",
                )
            )
    return _finish(report, out_dir, started)


COMMANDS = {
    "verify-theory": cmd_verify_theory,
    "evolve": cmd_evolve,
    "spectrum": cmd_spectrum,
    "train": cmd_train,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nld", description="Nonlocal diffusion block laboratory"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="overrides config seed")
        p.add_argument("--out", type=str, default=None, help="overrides output directory")
    args = parser.parse_args(argv)

    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            print(f"error: cannot load config: {err}", file=sys.stderr)
            return 2
    try:
        config = resolve_config(args.command, raw, seed=args.seed, out=args.out)
        report = COMMANDS[args.command](config)
    except (ConfigError, NldError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    for check in report.checks:
        bits = [f"[{check.status.upper():>13}] {check.name}"]
        if check.measured is not None:
            bits.append(f"measured={check.measured}")
        if check.threshold is not None:
            bits.append(f"threshold={check.threshold}")
        if check.detail:
            bits.append(f"({check.detail})")
        print("  ".join(bits))
    print(f"OVERALL: {report.overall.upper()}  (artifacts in {config['out_dir']})")
    return 0 if report.overall == "pass" else 1


if __name__ == "__main__":
    sys.exit(main())
