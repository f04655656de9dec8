"""Command-line entry point.

Subcommands: ``mix`` (generate a dataset), ``render`` (re-render recipes),
``oracle`` (oracle-mask separation over an evaluation set), ``eval``
(objective metrics + aggregate report), ``serve-test`` (listening-test
service), ``report-mos`` (aggregate stored ratings).  Exit codes: 0 on
success, 1 when per-track errors occurred (or a set cannot be evaluated),
2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, listening, metrics, mixer, service
from .audio import read_wav, write_wav
from .manifest import ManifestError, load_manifest
from .separation import StemPair, oracle_separate

__all__ = ["main", "cli_dispatch"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="podbench",
        description="Benchmark harness for music/speech separation in podcast-style audio.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_mix = sub.add_parser("mix", help="generate a synthetic mixture dataset")
    p_mix.add_argument("--speech-manifest", required=True)
    p_mix.add_argument("--music-manifest", required=True)
    p_mix.add_argument("--out", required=True, help="output directory")
    p_mix.add_argument("--seed", type=int, default=0, help="master seed")
    p_mix.add_argument("--count", type=int, default=10, help="records per partition")
    p_mix.add_argument("--duration", type=float, default=18.0, help="record length in seconds")
    p_mix.add_argument("--silence-threshold", type=float, default=-40.0, help="dBFS RMS floor for music fragments")
    p_mix.add_argument("--partitions", default="train,validation,test")
    p_mix.add_argument("--workers", type=int, default=1)
    p_mix.add_argument("--config", help="JSON file overriding the generation settings")

    p_render = sub.add_parser("render", help="re-render recipe JSON files")
    p_render.add_argument("--recipe", required=True, help="recipe file or directory of *_recipe.json")
    p_render.add_argument("--speech-manifest", required=True)
    p_render.add_argument("--music-manifest", required=True)
    p_render.add_argument("--out", required=True)

    p_oracle = sub.add_parser("oracle", help="oracle-mask separation over an evaluation set")
    p_oracle.add_argument("--set", dest="eval_set", required=True, help="evaluation set JSON")
    p_oracle.add_argument("--out", required=True)
    p_oracle.add_argument("--mask", choices=("irm", "ibm"), default="irm")
    p_oracle.add_argument("--combine", action="store_true", help="route masks through the combination rule")
    p_oracle.add_argument("--complementary", action="store_true", help="use the complementary music mask")

    p_eval = sub.add_parser("eval", help="objective metrics and aggregate report")
    p_eval.add_argument("--set", dest="eval_set", required=True)
    p_eval.add_argument("--system", default="system", help="system name for the report")
    p_eval.add_argument("--filter-length", type=int, default=metrics.DEFAULT_FILTER_LENGTH)
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument("--format", choices=("markdown", "csv", "json"), default="markdown")
    p_eval.add_argument("--mos", help="MOS summary JSON to merge into the report")

    p_serve = sub.add_parser("serve-test", help="serve the subjective listening test")
    p_serve.add_argument("--config", required=True, help="test config JSON")
    p_serve.add_argument("--ratings", required=True, help="ratings JSONL store path")
    p_serve.add_argument("--static", help="directory with the rating UI")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8765)

    p_mos = sub.add_parser("report-mos", help="aggregate stored ratings into MOS")
    p_mos.add_argument("--ratings", required=True)
    p_mos.add_argument("--config", required=True)
    p_mos.add_argument("--out", help="write the summary here instead of stdout")
    p_mos.add_argument("--format", choices=("json", "text"), default="json")

    return parser


def _cmd_mix(args) -> int:
    speech = load_manifest(args.speech_manifest, "speech")
    music = load_manifest(args.music_manifest, "music")
    config = mixer.GenerateConfig(
        count=args.count,
        duration_s=args.duration,
        silence_threshold_dbfs=args.silence_threshold,
        partitions=tuple(p for p in args.partitions.split(",") if p),
    )
    if args.config:
        overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        config = replace(config, **overrides)
    recipes = mixer.generate_dataset(
        speech, music, config, args.seed, out_dir=args.out, workers=args.workers
    )
    print(f"wrote {len(recipes)} records to {args.out}")
    return 0


def _cmd_render(args) -> int:
    speech = load_manifest(args.speech_manifest, "speech")
    music = load_manifest(args.music_manifest, "music")
    recipe_path = Path(args.recipe)
    paths = sorted(recipe_path.glob("*_recipe.json")) if recipe_path.is_dir() else [recipe_path]
    if not paths:
        print(f"no recipes found under {recipe_path}", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    for path in paths:
        recipe = mixer.MixRecipe.from_json(path.read_text(encoding="utf-8"))
        try:
            result = mixer.render_recipe(recipe, speech, music)
        except mixer.MixSynthError as exc:
            print(f"{recipe.record_id}: {exc}", file=sys.stderr)
            failures += 1
            continue
        mixer.write_record(out_dir, recipe.record_id, result)
    print(f"rendered {len(paths) - failures}/{len(paths)} recipes to {out_dir}")
    return 1 if failures else 0


def _cmd_oracle(args) -> int:
    eval_set = harness.load_eval_set(args.eval_set)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    updated = []
    failures = []
    for track in sorted(eval_set.tracks, key=lambda t: t.track_id):
        if not track.has_references:
            failures.append(harness.TrackError(track.track_id, "oracle", "missing reference stems"))
            continue
        try:
            mixture = read_wav(eval_set.root / track.mixture)
            references = StemPair(
                speech=read_wav(eval_set.root / track.speech_ref),
                music=read_wav(eval_set.root / track.music_ref),
            )
            estimates = oracle_separate(
                mixture,
                references,
                mask_kind=args.mask,
                combine=args.combine,
                complementary_music_mask=args.complementary,
            )
        except Exception as exc:
            failures.append(harness.TrackError(track.track_id, "oracle", str(exc)))
            continue
        speech_name = f"{track.track_id}_speech_est.wav"
        music_name = f"{track.track_id}_music_est.wav"
        write_wav(out_dir / speech_name, estimates.speech, "float32")
        write_wav(out_dir / music_name, estimates.music, "float32")
        updated.append(
            harness.EvalTrack(
                track_id=track.track_id,
                mixture=str((eval_set.root / track.mixture).resolve()),
                speech_ref=str((eval_set.root / track.speech_ref).resolve()),
                music_ref=str((eval_set.root / track.music_ref).resolve()),
                speech_est=speech_name,
                music_est=music_name,
            )
        )
    out_set = harness.EvalSet(name=eval_set.name, tracks=tuple(updated), root=out_dir)
    harness.save_eval_set(out_set, out_dir / "eval_set.json")
    if failures:
        harness.write_errors_json(failures, out_dir / "errors.json")
        print(f"{len(failures)} tracks failed; see errors.json", file=sys.stderr)
        return 1
    print(f"separated {len(updated)} tracks into {out_dir}")
    return 0


def _cmd_eval(args) -> int:
    eval_set = harness.load_eval_set(args.eval_set)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        rows, errors = harness.run_evaluation(eval_set, args.system, args.filter_length)
    except harness.UnsupportedEvaluationError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    mos = None
    if args.mos:
        doc = json.loads(Path(args.mos).read_text(encoding="utf-8"))
        mos = listening.MosSummary(
            groups=tuple(listening.MosGroup(**g) for g in doc["groups"]),
            notes=tuple(doc.get("notes", ())),
        )
    suffix = {"markdown": "md", "csv": "csv", "json": "json"}[args.format]
    if rows:
        report = harness.aggregate(rows)
        (out_dir / f"report.{suffix}").write_text(
            harness.emit_report(report, args.format, mos), encoding="utf-8"
        )
        per_system: dict[str, list[metrics.SeparationMetrics]] = {}
        for row in rows:
            per_system.setdefault(row.system, []).append(row.metrics)
        for system, system_rows in sorted(per_system.items()):
            (out_dir / f"metrics_{system}.csv").write_text(
                metrics.rows_to_csv(system_rows), encoding="utf-8"
            )
    harness.write_errors_json(errors, out_dir / "errors.json")
    if errors:
        print(f"{len(errors)} tracks failed; see errors.json", file=sys.stderr)
        return 1
    print(f"evaluated {len(eval_set.tracks)} tracks; report in {out_dir}")
    return 0


def _cmd_serve_test(args) -> int:
    config = listening.load_test_config(args.config)
    store = listening.RatingStore(args.ratings)
    server = service.serve(config, store, host=args.host, port=args.port, static_dir=args.static)
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _cmd_report_mos(args) -> int:
    config = listening.load_test_config(args.config)
    store = listening.RatingStore(args.ratings)
    summary = listening.compute_mos(store, config)
    if args.format == "json":
        text = summary.to_json()
    else:
        lines = [
            f"{g.condition} {g.source_type} {g.metric}: {g.formatted()} (n={g.n})"
            for g in summary.groups
        ]
        lines.extend(f"note: {n}" for n in summary.notes)
        text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "mix": _cmd_mix,
    "render": _cmd_render,
    "oracle": _cmd_oracle,
    "eval": _cmd_eval,
    "serve-test": _cmd_serve_test,
    "report-mos": _cmd_report_mos,
}


def cli_dispatch(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except (
        mixer.MixSynthError,
        listening.ListeningTestError,
        FileNotFoundError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return cli_dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
