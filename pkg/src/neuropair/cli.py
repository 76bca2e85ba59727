"""Batch command line for the full pipeline.

Every subcommand is deterministic given its flags: all randomness flows from
``--seed``, output files carry no timestamps, and rerunning a command
reproduces its outputs byte for byte. Failures print one machine-parsable
line ``error [CODE]: message`` on stderr and exit with a per-class code
(input 2, shape 3, format 4, numeric 5, index 6).

Any flag may also come from an INI config file via ``--config``: values are
read from a section named after the subcommand (plus an optional [common]
section); explicit command-line flags always win.
"""

import configparser
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, analysis, dataio, matching, synth
from .activations import align, filter_activations
from .backend import selected_backend
from .embedding import (
    EmbeddingConfig,
    average_test_activations,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .errors import InputError, NeuropairError


class ConfigCommand(click.Command):
    """Command whose defaults can be supplied by an INI config file."""

    def invoke(self, ctx):
        path = ctx.params.get("config")
        if path:
            cp = configparser.ConfigParser()
            cp.optionxform = str
            if not cp.read(path, encoding="utf-8"):
                raise InputError(f"config file not found: {path}")
            by_name = {p.name: p for p in self.params}
            for section in ("common", self.name):
                if section not in cp:
                    continue
                for key, raw in cp[section].items():
                    name = key.replace("-", "_")
                    if name not in by_name or name == "config":
                        continue
                    if (
                        ctx.get_parameter_source(name)
                        == click.core.ParameterSource.COMMANDLINE
                    ):
                        continue
                    ctx.params[name] = by_name[name].type.convert(
                        raw, by_name[name], ctx
                    )
        return super().invoke(ctx)


def _common_options(fn):
    fn = click.option(
        "--config", type=click.Path(exists=False), default=None,
        help="INI file supplying flag defaults.",
    )(fn)
    fn = click.option(
        "--threads", type=int, default=0,
        help="Cap worker threads for compiled kernels (0 = leave as is).",
    )(fn)
    return fn


def _apply_threads(threads):
    if threads and selected_backend() == "numba":
        import numba

        numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))


def _outdir(out):
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    click.echo(f"wrote {path}")


@click.group()
@click.version_option(__version__)
def main():
    """Couple brain-network and CNN-filter activations recorded against the
    same stimulus timeline."""


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

@main.command(cls=ConfigCommand)
@click.option("--subjects", type=int, default=12, show_default=True)
@click.option("--timepoints", "-t", "timepoints", type=int, default=200, show_default=True)
@click.option("--voxels", type=int, default=500, show_default=True)
@click.option("--sources", type=int, default=8, show_default=True)
@click.option("--channels", type=int, default=16, show_default=True)
@click.option("--sigma-brain", type=float, default=0.5, show_default=True)
@click.option("--sigma-filter", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_common_options
def synth_cmd(subjects, timepoints, voxels, sources, channels, sigma_brain,
              sigma_filter, seed, out, config, threads):
    """Generate a synthetic coupled dataset with planted correspondences."""
    _apply_threads(threads)
    click.echo(f"[synth] seed={seed}")
    cfg = synth.SynthConfig(
        subjects=subjects, t=timepoints, n_voxels=voxels, m_sources=sources,
        c_channels=channels, sigma_brain=sigma_brain, sigma_filter=sigma_filter,
        seed=seed,
    )
    ds = synth.generate(cfg)
    root = _outdir(out)
    (root / "signals").mkdir(exist_ok=True)
    manifest = dataio.Manifest(name="synthetic", tr_seconds=1.0)
    for subj in ds.subjects:
        path = root / "signals" / f"{subj.subject_id}.npy"
        dataio.write_tensor(path, subj.signal)
        manifest.subjects.append(
            dataio.ManifestSubject(subject_id=subj.subject_id, path=path, split=subj.split)
        )
    acts_path = root / "filter_activations.npy"
    dataio.write_tensor(acts_path, ds.filter_acts)
    manifest.activations.append(
        dataio.ManifestActivations(model="synthetic", layer="planted", path=acts_path, kind="tensor")
    )
    dataio.write_tensor(root / "sources.npy", ds.sources)
    filter_labels = matching.LabelTable(
        labels={
            int(c): (
                f"planted source {int(np.flatnonzero(ds.permutation == c)[0])}"
                if c in set(ds.permutation.tolist())
                else "noise channel"
            )
            for c in range(channels)
        }
    )
    source_labels = matching.LabelTable(
        labels={i: f"latent source {i}" for i in range(sources)}
    )
    dataio.write_labels(filter_labels, root / "filter_labels.csv")
    dataio.write_labels(source_labels, root / "source_labels.csv")
    manifest.labels["filter"] = root / "filter_labels.csv"
    with open(root / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "permutation": [int(c) for c in ds.permutation],
                "subjects": subjects, "timepoints": timepoints, "voxels": voxels,
                "sources": sources, "channels": channels,
                "sigma_brain": sigma_brain, "sigma_filter": sigma_filter, "seed": seed,
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    dataio.save_manifest(manifest, root / "manifest.ini", root=root)
    counts = manifest.split_counts()
    click.echo(f"[synth] wrote {len(ds.subjects)} subjects to {root} (splits: {counts})")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

@main.command(cls=ConfigCommand)
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--variant", type=click.Choice(["lt", "lt_lstm", "lt_msa"]), default="lt",
              show_default=True)
@click.option("--networks", "-m", type=int, default=64, show_default=True)
@click.option("--epochs", type=int, default=100, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--lr", type=float, default=0.01, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_common_options
def train_cmd(manifest_path, variant, networks, epochs, batch_size, lr, seed, out,
              config, threads):
    """Train the embedding on the manifest's train split."""
    _apply_threads(threads)
    click.echo(f"[train] seed={seed}")
    manifest = dataio.load_manifest(manifest_path)
    subjects = dataio.load_subjects(manifest)
    counts = manifest.split_counts()
    total = max(1, len(manifest.subjects))
    fractions = {k: f"{v / total:.2f}" for k, v in counts.items()}
    click.echo(f"[train] split counts {counts}, fractions {fractions}")
    n_voxels = subjects[0].signal.shape[1]
    cfg = EmbeddingConfig(
        n_voxels=n_voxels, n_networks=networks, variant=variant,
        lr=lr, epochs=epochs, batch_size=batch_size, seed=seed,
    )
    model, log = train(subjects, cfg)
    root = _outdir(out)
    save_checkpoint(model, root / "checkpoint.npec")
    click.echo(f"wrote {root / 'checkpoint.npec'}")
    _write_text(root / "training_log.csv", log.to_csv())
    click.echo(
        f"[train] mse {log.initial_train_mse:.6f} -> {log.final_train_mse:.6f} "
        f"over {epochs} epochs"
    )


# ---------------------------------------------------------------------------
# embed
# ---------------------------------------------------------------------------

@main.command(cls=ConfigCommand)
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test",
              show_default=True)
@click.option("--out", required=True, type=click.Path())
@_common_options
def embed_cmd(manifest_path, checkpoint, split, out, config, threads):
    """Apply a checkpoint to one split and average the activations."""
    _apply_threads(threads)
    manifest = dataio.load_manifest(manifest_path)
    subjects = dataio.load_subjects(manifest)
    model = load_checkpoint(checkpoint)
    averaged = average_test_activations(model, subjects, split=split)
    root = _outdir(out)
    dataio.write_tensor(root / "fbn_activations.npy", averaged)
    click.echo(f"wrote {root / 'fbn_activations.npy'}")


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------

@main.command(cls=ConfigCommand)
@click.argument("feature_maps", nargs=-1, required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@_common_options
def extract_cmd(feature_maps, out, config, threads):
    """Reduce (T, C, H, W) feature-map tensors to (T, C) activation matrices."""
    _apply_threads(threads)
    root = _outdir(out)
    for fm_path in feature_maps:
        fm = dataio.read_tensor(fm_path)
        acts = filter_activations(fm)
        out_path = root / (Path(fm_path).stem + ".activations.npy")
        dataio.write_tensor(out_path, acts)
        click.echo(f"wrote {out_path}")


# ---------------------------------------------------------------------------
# pair
# ---------------------------------------------------------------------------

@main.command(cls=ConfigCommand)
@click.option("--fbn", "fbn_path", required=True, type=click.Path(),
              help="(t, m) network activation tensor.")
@click.option("--filters", "filters_path", required=True, type=click.Path(),
              help="(T, C) filter activation tensor.")
@click.option("--direction", type=click.Choice(["fbn-to-filter", "filter-to-fbn"]),
              default="fbn-to-filter", show_default=True)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--lag", type=int, default=0, show_default=True,
              help="Shift of the filter series in samples (hemodynamic delay).")
@click.option("--model", default="", help="Model name recorded in the result.")
@click.option("--layer", default="", help="Layer name recorded in the result.")
@click.option("--run", default="", help="Run tag recorded in the result.")
@click.option("--out", required=True, type=click.Path())
@_common_options
def pair_cmd(fbn_path, filters_path, direction, alpha, lag, model, layer, run, out,
             config, threads):
    """Pair every source neuron with its maximally correlated target."""
    _apply_threads(threads)
    fbn = dataio.read_tensor(fbn_path)
    filt = dataio.read_tensor(filters_path)
    a2, l2 = align(filt, fbn, lag=lag)
    direction_key = direction.replace("-", "_")
    if direction_key == "fbn_to_filter":
        corr = matching.correlation_matrix(l2, a2)
    else:
        corr = matching.correlation_matrix(a2, l2)
    result = matching.pair_neurons(corr, direction_key, alpha=alpha)
    result.model = model
    result.layer = layer
    result.run = run
    root = _outdir(out)
    matching.dump_pairing_json(result, root / "pairing.json")
    click.echo(f"wrote {root / 'pairing.json'}")
    click.echo(
        f"[pair] mean r={result.mean_r:.4f}, "
        f"not significant {result.significance_ratio()} at alpha={alpha}"
    )


# ---------------------------------------------------------------------------
# annotate
# ---------------------------------------------------------------------------

@main.command(cls=ConfigCommand)
@click.option("--pairing", "pairing_path", required=True, type=click.Path())
@click.option("--source-labels", required=True, type=click.Path())
@click.option("--target-labels", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@_common_options
def annotate_cmd(pairing_path, source_labels, target_labels, out, config, threads):
    """Transfer semantic descriptions across the paired neurons."""
    result = matching.load_pairing_json(pairing_path)
    src = dataio.read_labels(source_labels)
    dst = dataio.read_labels(target_labels)
    entries = matching.cross_annotate(result, src, dst)
    root = _outdir(out)
    _write_text(root / "annotations.jsonl", matching.annotation_jsonl(entries))
    _write_text(root / "annotations.txt", matching.annotation_text(entries))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@main.command(cls=ConfigCommand)
@click.argument("pairings", nargs=-1, required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@_common_options
def report_cmd(pairings, out, config, threads):
    """Summarize pairings as mean-PCC / significance-ratio table rows."""
    results = [matching.load_pairing_json(p) for p in pairings]
    rows = matching.summarize(results)
    root = _outdir(out)
    _write_text(root / "report.txt", matching.summary_text(rows))
    _write_text(root / "report.csv", matching.summary_csv(rows))


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------

@main.command(cls=ConfigCommand)
@click.option(
    "--variant", "variants", multiple=True, required=True, nargs=4,
    metavar="NAME FBN_NPY FILTERS_NPY PAIRING_JSON",
    help="One embedding variant: its activations and pairing result.",
)
@click.option("--lag", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_common_options
def ablate_cmd(variants, lag, out, config, threads):
    """Compare variants by metric means over their matched pairs."""
    _apply_threads(threads)
    bundles_by_variant = {}
    for name, fbn_path, filters_path, pairing_path in variants:
        fbn = dataio.read_tensor(fbn_path)
        filt = dataio.read_tensor(filters_path)
        result = matching.load_pairing_json(pairing_path)
        a2, l2 = align(filt, fbn, lag=lag)
        if result.direction == "fbn_to_filter":
            src, dst = l2, a2
        else:
            src, dst = a2, l2
        bundles = [
            analysis.pair_metrics(src[:, p.source], dst[:, p.target])
            for p in result.pairs
            if p.target is not None
        ]
        if not bundles:
            raise InputError(f"variant {name!r} has no paired neurons")
        bundles_by_variant[name] = bundles
    rows = analysis.ablation_report(bundles_by_variant)
    root = _outdir(out)
    _write_text(root / "ablation.txt", analysis.ablation_text(rows))
    _write_text(root / "ablation.csv", analysis.ablation_csv(rows))


# ---------------------------------------------------------------------------
# regress
# ---------------------------------------------------------------------------

@main.command(cls=ConfigCommand)
@click.option("--points", "points_path", required=True, type=click.Path(),
              help="CSV with header and two columns: mean PCC, accuracy.")
@click.option("--out", required=True, type=click.Path())
@_common_options
def regress_cmd(points_path, out, config, threads):
    """Fit accuracy against mean PCC by ordinary least squares."""
    points = []
    with open(points_path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) < 2:
        raise InputError(f"{points_path}: need a header and at least one point")
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) < 2:
            raise InputError(f"{points_path}: line {lineno}: expected two columns")
        try:
            points.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise InputError(
                f"{points_path}: line {lineno}: non-numeric value"
            ) from None
    fit = analysis.ols_fit(points)
    root = _outdir(out)
    _write_text(root / "regression.json", analysis.regression_json(fit))
    _write_text(root / "regression_plot.csv", analysis.regression_plot_data(points, fit))
    click.echo(
        f"[regress] slope={fit.slope:.4f} intercept={fit.intercept:.4f} "
        f"r2={fit.r_squared:.4f} p={fit.p_value:.3g} n={fit.n}"
    )


def entrypoint(argv=None):
    try:
        main(args=argv, standalone_mode=False)
    except click.ClickException as exc:
        click.echo(f"error [E_USAGE]: {exc.format_message()}", err=True)
        return exc.exit_code
    except click.exceptions.Abort:
        return 130
    except NeuropairError as exc:
        click.echo(f"error [{exc.code}]: {exc}", err=True)
        return exc.exit_code
    except IndexError as exc:
        click.echo(f"error [E_INDEX]: {exc}", err=True)
        return 6
    return 0


if __name__ == "__main__":
    sys.exit(entrypoint())
