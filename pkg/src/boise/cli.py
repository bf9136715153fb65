"""Command-line interface: sample, select, rank and cv.

Exit status is 0 on success, 1 on runtime failure and 2 on usage errors.
"""

from __future__ import annotations

import csv
import functools
import json
import logging
from pathlib import Path

import click
import numpy as np

from .crossval import CVConfig, run_cv, write_metrics_csv
from .dpmm import DEFAULT_BURN_IN, Hyperparams, choose_hyperparams, load_ensemble, sample_posterior
from .errors import BoiseError
from .matrix import ContinuousMatrix, load_csv, read_matrix
from .pel import InformerAssay
from .ranker import encode_intermediate, rank_all, write_ranking_csv
from .selector import SelectionConfig, select_informers

METHOD_ALIASES = {"greedy": "greedy-pel", "greedy-pel": "greedy-pel", "entropy": "entropy"}


def _runtime_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (BoiseError, ValueError, KeyError, OSError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _hyperparams(x0, m0, alpha0, beta0, seed):
    if m0 is not None and alpha0 is not None and beta0 is not None:
        return Hyperparams(m0, alpha0, beta0)
    if m0 is None:
        eb = choose_hyperparams(x0, seed=seed)
        m0 = eb.m0
        alpha0 = eb.alpha0 if alpha0 is None else alpha0
    elif alpha0 is None:
        alpha0 = x0.observed_mean()
    beta0 = 1.0 - alpha0 if beta0 is None else beta0
    return Hyperparams(m0, alpha0, beta0)


def _split(text):
    return [t.strip() for t in text.split(",") if t.strip()]


input_option = click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False), help="Binary target x compound CSV.")
missing_option = click.option("--missing", default="NA", show_default=True, help="Token marking unobserved cells.")
seed_option = click.option("--seed", default=0, show_default=True, type=int)


def hyper_options(fn):
    fn = click.option("--beta0", type=float, default=None, help="Beta prior inactive pseudo-count (default 1 - alpha0).")(fn)
    fn = click.option("--alpha0", type=float, default=None, help="Beta prior active pseudo-count (default: observed rate).")(fn)
    fn = click.option("--m0", type=float, default=None, help="Partition prior mass (default: empirical Bayes).")(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Informer-based compound prioritization for new targets."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@input_option
@missing_option
@hyper_options
@click.option("--samples", default=100, show_default=True, type=click.IntRange(min=1))
@click.option("--thin", default=50, show_default=True, type=click.IntRange(min=1))
@click.option("--burnin", default=DEFAULT_BURN_IN, show_default=True, type=click.IntRange(min=0))
@seed_option
@click.option("--init", type=click.Choice(["one", "singletons"]), default="one", show_default=True)
@click.option("--output", required=True, type=click.Path(dir_okay=False), help="Ensemble JSON to write.")
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None, help="Cluster-count trace CSV (default: OUTPUT with .trace.csv).")
@_runtime_errors
def sample(input_path, missing, m0, alpha0, beta0, samples, thin, burnin, seed, init, output, trace_path):
    """Draw target clusterings from the posterior."""
    x0 = read_matrix(input_path, missing)
    hyper = _hyperparams(x0, m0, alpha0, beta0, seed)
    ens = sample_posterior(x0, hyper, n_samples=samples, thin=thin, burn_in=burnin, seed=seed, init=init)
    ens.save(output)
    trace_path = trace_path or str(Path(output).with_suffix(".trace.csv"))
    with open(trace_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep", "clusters"])
        for sweep, k in enumerate(ens.trace, start=1):
            w.writerow([sweep, k])
    click.echo(f"wrote {len(ens)} clusterings to {output} (m0={hyper.m0:g}, alpha0={hyper.alpha0:.6g}, beta0={hyper.beta0:.6g})")


@main.command()
@input_option
@missing_option
@click.option("--ensemble", "ensemble_path", required=True, type=click.Path(dir_okay=False))
@click.option("--method", type=click.Choice(sorted(METHOD_ALIASES)), default="greedy", show_default=True)
@click.option("--na", "n_A", required=True, type=click.IntRange(min=0), help="Informer set size.")
@click.option("--nt", "n_T", required=True, type=click.IntRange(min=1), help="Top set size.")
@seed_option
@click.option("--draws", default=1, show_default=True, type=click.IntRange(min=1), help="Simulated outcomes per clustering.")
@click.option("--threads", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--output", required=True, type=click.Path(dir_okay=False), help="Selection report JSON.")
@_runtime_errors
def select(input_path, missing, ensemble_path, method, n_A, n_T, seed, draws, threads, output):
    """Choose an informer set."""
    x0 = read_matrix(input_path, missing)
    ens = load_ensemble(ensemble_path, x0)
    config = SelectionConfig(n_A=n_A, n_T=n_T, method=METHOD_ALIASES[method])
    result = select_informers(ens, config, seed=seed, draws=draws, threads=threads, compounds=x0.compounds)
    result.save(output)
    click.echo(",".join(x0.compounds[j] for j in result.informers))


def _informer_indices(x0, informers, selection):
    if (informers is None) == (selection is None):
        raise click.UsageError("give exactly one of --informers or --selection")
    if selection is not None:
        with open(selection, encoding="utf-8") as fh:
            return [int(j) for j in json.load(fh)["informers"]]
    return [x0.compound_index(c) for c in _split(informers)]


@main.command()
@input_option
@missing_option
@click.option("--ensemble", "ensemble_path", required=True, type=click.Path(dir_okay=False))
@click.option("--informers", default=None, help="Comma-separated informer compound ids.")
@click.option("--selection", default=None, type=click.Path(dir_okay=False), help="Selection report JSON to take informers from.")
@click.option("--outcomes", default=None, help="Comma-separated 0/1 outcomes aligned with the informers.")
@click.option("--readouts", default=None, help="Comma-separated continuous readouts aligned with the informers.")
@click.option("--continuous", "continuous_path", default=None, type=click.Path(dir_okay=False), help="Training readouts CSV used to code --readouts.")
@click.option("--output", required=True, type=click.Path(dir_okay=False), help="Ranking CSV.")
@_runtime_errors
def rank(input_path, missing, ensemble_path, informers, selection, outcomes, readouts, continuous_path, output):
    """Rank all compounds for a new target given informer outcomes."""
    x0 = read_matrix(input_path, missing)
    ens = load_ensemble(ensemble_path, x0)
    A = _informer_indices(x0, informers, selection)
    if (outcomes is None) == (readouts is None):
        raise click.UsageError("give exactly one of --outcomes or --readouts")
    if outcomes is not None:
        xs = [int(v) for v in _split(outcomes)]
    else:
        if continuous_path is None:
            raise click.UsageError("--readouts needs --continuous")
        z = load_csv(continuous_path, missing_token=missing, kind="continuous")
        if not isinstance(z, ContinuousMatrix) or z.targets != x0.targets or z.compounds != x0.compounds:
            raise click.BadParameter("continuous readouts must share the binary matrix's identifiers", param_hint="--continuous")
        rows = np.all(z.observed[:, A] & x0.observed[:, A], axis=1)
        xs = encode_intermediate([float(v) for v in _split(readouts)], z.values[rows][:, A], x0.values[rows][:, A]).tolist()
    if len(xs) != len(A):
        raise click.UsageError(f"{len(A)} informers but {len(xs)} outcomes")
    ranking = rank_all(ens, InformerAssay(A, xs), x0)
    write_ranking_csv(ranking, output)
    click.echo(f"ranked {x0.n} compounds into {output}")


@main.command()
@input_option
@missing_option
@click.option("--method", type=click.Choice(sorted(METHOD_ALIASES)), default="greedy", show_default=True)
@click.option("--baseline", multiple=True, type=click.Choice(["frequent-hitters", "random"]), help="Baseline selectors to score alongside.")
@click.option("--na", "n_A", required=True, type=click.IntRange(min=0))
@click.option("--nt", "n_T", required=True, type=click.IntRange(min=1))
@hyper_options
@click.option("--samples", default=100, show_default=True, type=click.IntRange(min=1))
@click.option("--thin", default=50, show_default=True, type=click.IntRange(min=1))
@click.option("--burnin", default=DEFAULT_BURN_IN, show_default=True, type=click.IntRange(min=0))
@seed_option
@click.option("--draws", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--threads", default=1, show_default=True, type=click.IntRange(min=1), help="Folds run in parallel.")
@click.option("--folds", default=None, help="Comma-separated target ids to hold out (default: all).")
@click.option("--output", required=True, type=click.Path(dir_okay=False), help="Per-fold metrics CSV.")
@_runtime_errors
def cv(input_path, missing, method, baseline, n_A, n_T, m0, alpha0, beta0, samples, thin, burnin, seed, draws, threads, folds, output):
    """Leave-one-target-out evaluation."""
    x = read_matrix(input_path, missing)
    methods = tuple(dict.fromkeys((METHOD_ALIASES[method],) + tuple(baseline)))
    config = CVConfig(
        n_A=n_A, n_T=n_T, methods=methods, samples=samples, thin=thin, burn_in=burnin,
        m0=m0, alpha0=alpha0, beta0=beta0, draws=draws, seed=seed,
    )
    fold_idx = None if folds is None else [x.target_index(t) for t in _split(folds)]
    rows = run_cv(x, config, folds=fold_idx, threads=threads)
    write_metrics_csv(rows, output)
    click.echo(f"wrote {len(rows)} rows to {output}")


if __name__ == "__main__":  # pragma: no cover
    main()
