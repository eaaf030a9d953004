"""Command line interface: ``texmark <command> ...``.

Exit codes: 0 success, 2 input error, 3 config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import CompatibilityError, ConfigError, InputError, ParameterError, SpecError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3


def _config(path):
    from .pipeline import PipelineConfig

    return PipelineConfig.load(path) if path else PipelineConfig()


def _write(path, text: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc


def cmd_codebook(args) -> int:
    from .pipeline import build_codebook

    config = _config(args.config)
    cb = build_codebook([Path(p) for p in args.images], config)
    _write(args.out, json.dumps(cb.to_json(), sort_keys=True))
    print(f"{cb.k} textons -> {args.out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    from .pipeline import detect
    from .texture import TextonCodebook

    config = _config(args.config)
    codebook = TextonCodebook.load(args.codebook)
    result = detect(args.image, codebook, config, cache_dir=args.cache_dir)
    _write(args.out, result.dumps())
    print(f"{len(result.closed)} closed, {len(result.open)} open -> {args.out}"
          + (" (cached)" if result.from_cache else ""))
    return EXIT_OK


def cmd_match(args) -> int:
    from .pipeline import PipelineConfig, SectionResult, dumps_report, match_sections

    a = SectionResult.load(args.a)
    b = SectionResult.load(args.b)
    config = _config(args.config) if args.config else PipelineConfig.from_json(a.config)
    report = match_sections(a, b, config.match_weights(args.no_location), args.no_location)
    _write(args.out, dumps_report(report))
    print(f"{len(report['pairs'])} matches -> {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from . import bench, report
    from .synthbench import DistortionSpec, SceneSpec

    config = bench.bench_config() if args.config is None else _config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.suite:
        outcomes = bench.run_suite(range(args.seed, args.seed + args.suite), config,
                                   progress=lambda o: print(f"pair {o.seed}: "
                                                            f"{o.match_correct:.2f} correct",
                                                            flush=True))
    else:
        if not (args.scene and args.distortion):
            raise InputError("bench needs <scene.json> <distort.json> or --suite N")
        scene = SceneSpec.load(args.scene)
        dist = DistortionSpec.load(args.distortion)
        o = bench.run_scene_pair(scene, dist, config, args.seed, keep=True)
        x = o.extras
        report.render_pair_figure(
            x["img_a"].intensities, x["img_b"].intensities, x["report"],
            {lm.id: lm for lm in x["det_a"].result.landmarks},
            {lm.id: lm for lm in x["det_b"].result.landmarks},
            out_dir / "pair_matches.png", title=f"seed {o.seed}")
        outcomes = [o]
    bench.write_csv(outcomes, out_dir / "bench.csv")
    report.render_bench_summary(outcomes, out_dir / "bench_summary.png")
    summary = bench.summarize(outcomes)
    _write(out_dir / "summary.json", json.dumps({"version": 1, **summary}, sort_keys=True,
                                                indent=1))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_overlay(args) -> int:
    from . import report
    from .pipeline import SectionResult, load_report, report_landmarks
    from .texture import load_image

    try:
        doc = json.loads(Path(args.json).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {args.json}: {exc}") from exc
    stem = Path(args.out) if args.out else Path(args.image).with_suffix("")
    img = load_image(args.image)
    if isinstance(doc, dict) and "pairs" in doc:
        rep = load_report(args.json)
        out_a = report.render_match_overlay(args.image, img.intensities, rep, "a",
                                            report_landmarks(rep, "a"), f"{stem}.a.png")
        written = [out_a]
        if args.image_b:
            img_b = load_image(args.image_b)
            written.append(report.render_match_overlay(
                args.image_b, img_b.intensities, rep, "b", report_landmarks(rep, "b"),
                f"{stem}.b.png"))
    else:
        res = SectionResult.from_json(doc)
        written = [report.render_result_overlay(args.image, img.intensities, res,
                                                f"{stem}.overlay.png")]
    for p in written:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="texmark", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"texmark {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("codebook", help="learn a shared texton codebook")
    c.add_argument("images", nargs="+")
    c.add_argument("--config")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_codebook)

    d = sub.add_parser("detect", help="detect landmarks in one section")
    d.add_argument("image")
    d.add_argument("--codebook", required=True)
    d.add_argument("--config")
    d.add_argument("--cache-dir")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_detect)

    m = sub.add_parser("match", help="match landmarks between two sections")
    m.add_argument("a")
    m.add_argument("b")
    m.add_argument("--no-location", action="store_true", help="drop the location term")
    m.add_argument("--config", help="weights (default: the config stored in <a>)")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_match)

    b = sub.add_parser("bench", help="synthetic benchmark: CSV, summary and figures")
    b.add_argument("scene", nargs="?")
    b.add_argument("distortion", nargs="?")
    b.add_argument("--suite", type=int, default=0, help="run N generated pairs instead")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--config")
    b.add_argument("--out-dir", default="bench_out")
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("overlay", help="draw landmarks or matches over an image")
    o.add_argument("image")
    o.add_argument("json", help="section result or match report")
    o.add_argument("--image-b", help="second image for a match report")
    o.add_argument("--out", help="output path stem")
    o.set_defaults(func=cmd_overlay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, CompatibilityError, SpecError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
