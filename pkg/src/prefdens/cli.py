"""Command-line interface: learn, project, score, gen, curve, recover, serve.

Exit codes: 2 malformed input, 3 EM failure, 4 model/domain mismatch.
Report commands write the delimited report, the generating spec, and a
rendered figure beside it (suppress with --no-plot).
"""

from __future__ import annotations

import functools
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from prefdens import figures
from prefdens.basis import ClusterStructure, UnknownVariableError
from prefdens.em import EMConfig, EMFailure, PriorConfig, em_fit, log_likelihood
from prefdens.modelio import (
    DomainMismatchError,
    ModelFormatError,
    canonical_json,
    load_db_csv,
    load_domain,
    load_model,
    load_structures,
    load_utility_input,
    save_db_csv,
    save_model,
)
from prefdens.projection import classify, ls_project, map_project
from prefdens.search import Candidate, SearchConfig, cs_score, hill_climb
from prefdens.synth import (
    STRUCTURED_3ATTR,
    STRUCTURED_4ATTR,
    GeneratorSpec,
    four_attribute_domain,
    make_generator_spec,
    run_learning_curve,
    run_projection_comparison,
    run_structure_recovery,
    sample_database,
    three_attribute_domain,
)

EXIT_BAD_INPUT = 2
EXIT_EM_FAILURE = 3
EXIT_MISMATCH = 4


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DomainMismatchError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_MISMATCH)
        except EMFailure as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_EM_FAILURE)
        except (
            FileNotFoundError,
            ModelFormatError,
            UnknownVariableError,
            json.JSONDecodeError,
            ValueError,
        ) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_BAD_INPUT)

    return wrapper


def parse_int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def parse_seeds(text: str) -> list[int]:
    vals = parse_int_list(text)
    if len(vals) == 1 and "," not in text:
        return list(range(vals[0]))
    return vals


@click.group()
def main():
    """Population utility densities: learning, projection, elicitation."""


# ---------------------------------------------------------------------------
# learn
# ---------------------------------------------------------------------------


@main.command()
@click.option("--domain", "domain_path", required=True, type=click.Path())
@click.option("--db", "db_path", required=True, type=click.Path())
@click.option("--types", "n_types", default=1, show_default=True)
@click.option("--structure", "structure_path", type=click.Path(), default=None,
              help="Fixed structure JSON; mutually exclusive with --structure-search.")
@click.option("--structure-search", is_flag=True, help="Hill-climb over structures.")
@click.option("--out", "out_path", default="model.json", show_default=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--restarts", default=5, show_default=True, help="EM restarts.")
@click.option("--em-tol", default=1e-6, show_default=True)
@click.option("--em-max-iters", default=200, show_default=True)
@click.option("--max-cluster-size", default=3, show_default=True)
@click.option("--search-restarts", default=3, show_default=True)
@cli_errors
def learn(domain_path, db_path, n_types, structure_path, structure_search,
          out_path, seed, restarts, em_tol, em_max_iters, max_cluster_size,
          search_restarts):
    """Fit the mixture model, optionally discovering structures."""
    if (structure_path is None) == (not structure_search):
        raise ModelFormatError("pass exactly one of --structure or --structure-search")
    domain = load_domain(domain_path)
    db = load_db_csv(db_path, domain)
    em_config = EMConfig(seed=seed, restarts=restarts, tol=em_tol, max_iters=em_max_iters)
    priors = PriorConfig()
    config_dict = {
        "types": n_types,
        "seed": seed,
        "restarts": restarts,
        "em_tol": em_tol,
        "em_max_iters": em_max_iters,
        "structure_search": bool(structure_search),
        "max_cluster_size": max_cluster_size,
    }
    trace_path = Path(out_path).with_suffix(".trace.jsonl")
    if structure_search:
        search_config = SearchConfig(
            restarts=search_restarts,
            seed=seed,
            max_cluster_size=max_cluster_size,
            final_em=em_config,
        )
        result = hill_climb(domain, db, n_types, search_config, priors)
        model = result.score.model
        score = result.score.cs_score
        trace_lines = [json.dumps(e, sort_keys=True) for e in result.trace]
        provenance = {
            "seed": seed,
            "config": config_dict,
            "score": score,
            "score_kind": "cheeseman_stutz",
        }
    else:
        structures = load_structures(structure_path, n_types)
        model, diag = em_fit(domain, structures, db, em_config, priors)
        score = diag.final_score
        trace_lines = [
            json.dumps(
                {"restart": r, "scores": t, "converged": diag.converged[r]},
                sort_keys=True,
            )
            for r, t in enumerate(diag.traces)
        ]
        provenance = {
            "seed": seed,
            "config": config_dict,
            "score": score,
            "score_kind": "observed_loglik",
        }
    save_model(model, out_path, provenance)
    trace_path.write_text("\n".join(trace_lines) + "\n")
    click.echo(f"wrote {out_path} (score {score:.4f}) and {trace_path}", err=True)


# ---------------------------------------------------------------------------
# project
# ---------------------------------------------------------------------------


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--method", type=click.Choice(["posterior", "map", "ls"]),
              default="posterior", show_default=True)
@click.option("--type", "type_id", default=None, type=int,
              help="Project onto this type instead of the most probable one.")
@click.option("--out", "out_path", default=None, type=click.Path())
@cli_errors
def project(model_path, input_path, method, type_id, out_path):
    """Project a (possibly partial) utility vector onto the model."""
    model, _ = load_model(model_path)
    u = load_utility_input(input_path, model.domain)
    result = classify(u, model)
    t_id = result.best_type if type_id is None else type_id
    if not 0 <= t_id < model.n_types:
        raise ModelFormatError(f"type {t_id} out of range")
    t = model.types[t_id]
    payload = {
        "method": method,
        "type": t_id,
        "type_posterior": result.type_posterior.tolist(),
    }
    if method == "posterior":
        payload["weights"] = result.posteriors[t_id].mean.tolist()
        payload["per_type"] = [
            {
                "type": i,
                "weights": post.mean.tolist(),
                "posterior_cov": post.cov.tolist(),
                "log_evidence": ev,
            }
            for i, (post, ev) in enumerate(zip(result.posteriors, result.log_evidences))
        ]
    else:
        if np.isnan(u).any():
            raise ModelFormatError(f"method {method} requires a complete utility vector")
        if method == "map":
            payload["weights"] = map_project(u, t.mu, t.sigma, t.noise_var, t.design).tolist()
        else:
            payload["weights"] = ls_project(u, t.design).tolist()
    text = canonical_json(payload)
    if out_path:
        Path(out_path).write_text(text)
    else:
        click.echo(text, nl=False)


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--db", "db_path", required=True, type=click.Path())
@click.option("--cs", "with_cs", is_flag=True,
              help="Also refit the model's structures and report the CS score.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
@cli_errors
def score(model_path, db_path, with_cs, seed, out_path):
    """Log likelihood of a database under a model (optionally + CS score)."""
    model, _ = load_model(model_path)
    db = load_db_csv(db_path, model.domain)
    total, per_record = log_likelihood(model, db)
    usable = db.usable()
    payload = {
        "total": total,
        "n_records": len(usable),
        "per_record": [
            {"respondent": rec.respondent, "log_likelihood": float(ll)}
            for rec, ll in zip(usable.records, per_record)
        ],
    }
    if with_cs:
        structures = tuple(t.structure for t in model.types)
        sc = cs_score(model.domain, Candidate(structures), db,
                      em_config=EMConfig(seed=seed))
        payload["cs"] = {
            "cs_score": sc.cs_score,
            "completed_marginal": sc.completed_marginal,
            "observed_loglik": sc.observed_loglik,
            "completed_loglik": sc.completed_loglik,
        }
    text = canonical_json(payload)
    if out_path:
        Path(out_path).write_text(text)
    else:
        click.echo(text, nl=False)


# ---------------------------------------------------------------------------
# gen / curve / recover
# ---------------------------------------------------------------------------


def builtin_spec(preset: str, param_seed: int, noise_sd: float | None) -> GeneratorSpec:
    kwargs = {} if noise_sd is None else {"noise_sd": noise_sd}
    if preset == "additive3":
        d = three_attribute_domain()
        return make_generator_spec(
            d, [ClusterStructure.fully_additive(d)], n_records=0, seed=param_seed, **kwargs
        )
    if preset == "structured3":
        return make_generator_spec(
            three_attribute_domain(), [STRUCTURED_3ATTR], n_records=0, seed=param_seed, **kwargs
        )
    if preset == "connected3":
        d = three_attribute_domain()
        return make_generator_spec(
            d, [ClusterStructure.full(d)], n_records=0, seed=param_seed, **kwargs
        )
    if preset == "curve4":
        return make_generator_spec(
            four_attribute_domain(), [STRUCTURED_4ATTR], n_records=0, seed=param_seed, **kwargs
        )
    raise ModelFormatError(f"unknown preset {preset!r}")


def resolve_spec(preset, spec_path, param_seed, noise_sd) -> GeneratorSpec:
    if (preset is None) == (spec_path is None):
        raise ModelFormatError("pass exactly one of --preset or --spec")
    if spec_path is not None:
        return GeneratorSpec.from_json_dict(json.loads(Path(spec_path).read_text()))
    return builtin_spec(preset, param_seed, noise_sd)


@main.command()
@click.option("--preset", type=click.Choice(["additive3", "structured3", "connected3", "curve4"]),
              default=None)
@click.option("--spec", "spec_path", type=click.Path(), default=None)
@click.option("--n", "n_records", required=True, type=int)
@click.option("--seed", default=0, show_default=True, help="Sampling seed.")
@click.option("--missing", default=0.0, show_default=True)
@click.option("--param-seed", default=0, show_default=True, help="True-parameter seed.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--truth-out", "truth_path", type=click.Path(), default=None)
@cli_errors
def gen(preset, spec_path, n_records, seed, missing, param_seed, out_path, truth_path):
    """Sample a synthetic utility database to CSV."""
    spec = resolve_spec(preset, spec_path, param_seed, None)
    spec = replace(spec, n_records=n_records, seed=seed, missing_rate=missing)
    db, truth = sample_database(spec)
    save_db_csv(db, spec.domain, out_path)
    Path(out_path).with_suffix(".spec.json").write_text(canonical_json(spec.to_json_dict()))
    if truth_path:
        Path(truth_path).write_text(
            canonical_json(
                {
                    "type_ids": truth.type_ids.tolist(),
                    "weights": [w.tolist() for w in truth.weights],
                }
            )
        )
    click.echo(f"wrote {out_path} ({n_records} records)", err=True)


@main.command()
@click.option("--kind", type=click.Choice(["learning", "projection"]), required=True)
@click.option("--preset", default=None,
              type=click.Choice(["additive3", "structured3", "connected3", "curve4"]))
@click.option("--spec", "spec_path", type=click.Path(), default=None)
@click.option("--ns", default="10,30,100,300,1000", show_default=True)
@click.option("--seeds", default="10", show_default=True,
              help="Count or comma-separated list of seeds.")
@click.option("--test-size", default=200, show_default=True)
@click.option("--heldout-size", default=200, show_default=True)
@click.option("--noise-sd", default=None, type=float,
              help="Override the generator noise (projection default 0.3).")
@click.option("--param-seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--plot/--no-plot", default=True, show_default=True)
@cli_errors
def curve(kind, preset, spec_path, ns, seeds, test_size, heldout_size, noise_sd,
          param_seed, out_path, plot):
    """Learning-curve or projection-comparison experiment: CSV (+ figure)."""
    ns_list = parse_int_list(ns)
    seed_list = parse_seeds(seeds)
    if preset is None and spec_path is None:
        preset = "structured3" if kind == "projection" else "curve4"
    if kind == "projection":
        spec = resolve_spec(preset, spec_path, param_seed,
                            0.3 if noise_sd is None else noise_sd)
        report = run_projection_comparison(spec, ns_list, test_size, seed_list)
        fig = figures.projection_comparison_figure(report.rows)
    else:
        spec = resolve_spec(preset, spec_path, param_seed, noise_sd)
        report = run_learning_curve(spec, ns_list, seed_list, heldout_size)
        fig = figures.learning_curve_figure(report.rows)
    report.write(out_path)
    if plot:
        figures.save_figure(fig, Path(out_path).with_suffix(".png"))
    click.echo(f"wrote {out_path}", err=True)


@main.command()
@click.option("--truth", default=None,
              type=click.Choice(["additive3", "structured3", "connected3"]))
@click.option("--spec", "spec_path", type=click.Path(), default=None)
@click.option("--ns", default="10,100,750", show_default=True)
@click.option("--seeds", default="10", show_default=True)
@click.option("--max-cluster-size", default=3, show_default=True)
@click.option("--search-restarts", default=2, show_default=True)
@click.option("--param-seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--plot/--no-plot", default=True, show_default=True)
@cli_errors
def recover(truth, spec_path, ns, seeds, max_cluster_size, search_restarts,
            param_seed, out_path, plot):
    """Structure-recovery experiment: CSV (+ figure) and a match-rate summary."""
    spec = resolve_spec(truth, spec_path, param_seed, None)
    ns_list = parse_int_list(ns)
    seed_list = parse_seeds(seeds)
    config = SearchConfig(restarts=search_restarts, max_cluster_size=max_cluster_size)
    report = run_structure_recovery(spec, ns_list, seed_list, config)
    report.write(out_path)
    if plot:
        figures.save_figure(figures.recovery_figure(report.rows),
                            Path(out_path).with_suffix(".png"))
    for n in ns_list:
        matches = report.values("exact_match", f"n={n}|")
        click.echo(f"n={n}: {sum(matches):.0f}/{len(matches)} exact", err=True)
    click.echo(f"wrote {out_path}", err=True)


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--port", default=8330, show_default=True,
              help="Overridden by PREFDENS_PORT when set.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="Directory with the console build to serve at /.")
@click.option("--journal", "journal_path", type=click.Path(), default=None)
@click.option("--calibration-sims", default=1000, show_default=True)
@cli_errors
def serve(model_path, port, host, static_dir, journal_path, calibration_sims):
    """Serve the elicitation session API (and the web console, if built)."""
    from prefdens.server import make_server

    model, _ = load_model(model_path)
    env_port = os.environ.get("PREFDENS_PORT")
    if env_port:
        port = int(env_port)
    try:
        server = make_server(
            model, host=host, port=port, model_id=Path(model_path).name,
            static_dir=static_dir, journal_path=journal_path,
            calibration_sims=calibration_sims,
        )
    except OSError as exc:
        click.echo(f"error: cannot bind {host}:{port}: {exc}", err=True)
        sys.exit(1)
    actual_port = server.server_address[1]
    click.echo(f"listening on http://{host}:{actual_port}", nl=True)
    sys.stdout.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


if __name__ == "__main__":
    main()
