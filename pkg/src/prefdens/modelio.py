"""File formats: domain JSON, structure JSON, database CSV, model JSON.

Model files round-trip losslessly: floats are serialized with ``repr``
(shortest exact form), keys are sorted, and loading re-marginalizes the
hyperparameters to verify the stored point parameters.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from prefdens.basis import ClusterStructure, Domain, build_basis, design_matrix
from prefdens.em import MixtureModel, TypeModel, UtilityDatabase, UtilityRecord
from prefdens.gaussian import (
    Dirichlet,
    NormalWishart,
    WishartScalar,
    dirichlet_mean,
    nw_marginalize,
    wishart_scalar_marginalize,
)

MODEL_FORMAT = "prefdens-model"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    """A model or input file does not parse or validate."""


class DomainMismatchError(ValueError):
    """A database or input vector does not match the model's domain."""


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_domain(path) -> Domain:
    try:
        data = json.loads(Path(path).read_text())
        return Domain.from_json_dict(data)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"bad domain file {path}: {exc}") from exc


def save_domain(domain: Domain, path) -> None:
    Path(path).write_text(canonical_json(domain.to_json_dict()))


def load_structures(path, n_types: int) -> list[ClusterStructure]:
    """Fixed structures: one ``{"clusters": ...}`` (replicated across types)
    or ``{"types": [{"clusters": ...}, ...]}`` with one entry per type."""
    try:
        data = json.loads(Path(path).read_text())
        if "types" in data:
            structures = [ClusterStructure.from_json_dict(t) for t in data["types"]]
        else:
            structures = [ClusterStructure.from_json_dict(data)] * n_types
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"bad structure file {path}: {exc}") from exc
    if len(structures) != n_types:
        raise ModelFormatError(
            f"structure file lists {len(structures)} types, expected {n_types}"
        )
    return structures


def db_to_csv(db: UtilityDatabase, domain: Domain) -> str:
    header = "respondent," + ",".join(domain.outcome_keys())
    lines = [header]
    for rec in db.records:
        cells = [rec.respondent]
        for v in rec.values:
            cells.append("" if math.isnan(v) else repr(float(v)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def save_db_csv(db: UtilityDatabase, domain: Domain, path) -> None:
    Path(path).write_text(db_to_csv(db, domain))


def load_db_csv(path, domain: Domain) -> UtilityDatabase:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ModelFormatError(f"empty database file {path}")
    header = lines[0].split(",")
    expected = ["respondent"] + domain.outcome_keys()
    if header != expected:
        raise DomainMismatchError(
            f"database columns do not match the domain (got {len(header) - 1} outcome "
            f"columns, expected {domain.n_outcomes} with canonical keys)"
        )
    records = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(expected):
            raise ModelFormatError(f"{path}:{ln}: expected {len(expected)} cells")
        values = np.array(
            [float(c) if c.strip() else np.nan for c in cells[1:]], dtype=float
        )
        records.append(UtilityRecord(cells[0], values))
    return UtilityDatabase(tuple(records))


def model_to_dict(model: MixtureModel, provenance: dict | None = None) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "domain": model.domain.to_json_dict(),
        "types": [
            {
                "structure": t.structure.to_json_dict(),
                "normal_wishart": {
                    "r": t.nw.r.tolist(),
                    "beta": t.nw.beta,
                    "lambda": t.nw.lam.tolist(),
                    "nu": t.nw.nu,
                },
                "noise_wishart": {
                    "rho": t.noise.rho,
                    "gamma": t.noise.gamma,
                    "eta": t.noise.eta,
                },
                "point": {
                    "mu": t.mu.tolist(),
                    "sigma": t.sigma.tolist(),
                    "noise_var": t.noise_var,
                },
            }
            for t in model.types
        ],
        "dirichlet_alpha": model.dirichlet.alpha.tolist(),
        "type_probs": model.theta.tolist(),
        "provenance": provenance or {},
    }


def model_from_dict(data: dict, tolerance: float = 1e-12) -> tuple[MixtureModel, dict]:
    if data.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a model file (missing format tag)")
    if data.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {data.get('version')!r}")
    domain = Domain.from_json_dict(data["domain"])
    types = []
    for i, td in enumerate(data["types"]):
        structure = ClusterStructure.from_json_dict(td["structure"])
        basis = build_basis(domain, structure)
        design = design_matrix(domain, basis).astype(float)
        nw_d = td["normal_wishart"]
        nw = NormalWishart(
            np.asarray(nw_d["r"], float), float(nw_d["beta"]),
            np.asarray(nw_d["lambda"], float), float(nw_d["nu"]),
        )
        ws_d = td["noise_wishart"]
        noise = WishartScalar(float(ws_d["rho"]), float(ws_d["gamma"]), float(ws_d["eta"]))
        if nw.dim != basis.m:
            raise ModelFormatError(
                f"type {i}: hyperparameter dimension {nw.dim} != basis size {basis.m}"
            )
        point = td["point"]
        mu = np.asarray(point["mu"], float)
        sigma = np.asarray(point["sigma"], float)
        noise_var = float(point["noise_var"])
        marg = nw_marginalize(nw)
        if (
            np.max(np.abs(marg.mean - mu)) > tolerance
            or np.max(np.abs(marg.cov - sigma)) > tolerance
            or abs(wishart_scalar_marginalize(noise) - noise_var) > tolerance
        ):
            raise ModelFormatError(
                f"type {i}: stored point parameters disagree with the "
                f"marginalized hyperparameters beyond {tolerance}"
            )
        types.append(TypeModel(structure, basis, design, nw, noise, mu, sigma, noise_var))
    alpha = np.asarray(data["dirichlet_alpha"], float)
    if alpha.shape[0] != len(types):
        raise ModelFormatError("dirichlet_alpha length does not match types")
    dirichlet = Dirichlet(alpha)
    theta = np.asarray(data["type_probs"], float)
    if np.max(np.abs(theta - dirichlet_mean(dirichlet))) > tolerance:
        raise ModelFormatError("type_probs disagree with the Dirichlet mean")
    model = MixtureModel(domain, types, dirichlet, theta)
    return model, data.get("provenance", {})


def save_model(model: MixtureModel, path, provenance: dict | None = None) -> None:
    Path(path).write_text(canonical_json(model_to_dict(model, provenance)))


def load_model(path) -> tuple[MixtureModel, dict]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"bad model file {path}: {exc}") from exc
    return model_from_dict(data)


def load_utility_input(path, domain: Domain) -> np.ndarray:
    """A single utility vector as JSON: a full list (null = missing) or a
    mapping from canonical outcome keys to values."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"bad input file {path}: {exc}") from exc
    values = data.get("values", data) if isinstance(data, dict) else data
    u = np.full(domain.n_outcomes, np.nan)
    if isinstance(values, list):
        if len(values) != domain.n_outcomes:
            raise DomainMismatchError(
                f"expected {domain.n_outcomes} values, got {len(values)}"
            )
        for i, v in enumerate(values):
            if v is not None:
                u[i] = float(v)
    elif isinstance(values, dict):
        for key, v in values.items():
            try:
                idx = domain.index_of_key(key)
            except ValueError as exc:
                raise DomainMismatchError(str(exc)) from exc
            u[idx] = float(v)
    else:
        raise ModelFormatError("input must be a list or outcome-key mapping")
    return u
