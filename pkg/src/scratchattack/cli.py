"""
Command-line entry point.

    scratchattack attack   [--config run.json] [flags]  -> records.jsonl, summary.json, run_info.json
    scratchattack defend   --records records.jsonl [flags] -> defense.json, defense.csv, defense.md
    scratchattack report   --records records.jsonl [--manifest m.json] -> metrics.csv, metrics.md, PNGs
    scratchattack rasterize --params x0,y0,...,c0,c1,c2 --size H W --out scratch.png

Flags mirror the keys of the run configuration and win over the file. Errors
are printed to stderr as a JSON object ``{"error": ..., "message": ...}`` and
give a nonzero exit status.
"""
import argparse
import csv
import datetime
import json
import logging
import platform
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .attack import replay_record
from .campaign import run_campaign
from .config import attack_config, build_oracle, load_config, merge, validate_config
from .defenses import DefenseSpec, clean_accuracy_delta, defend, recovery_rate
from .exceptions import ScratchAttackError
from .io import load_manifest, read_records, save_png, write_records
from .metrics import summarize
from .scratch import ScratchParams, apply_scratches

logger = logging.getLogger("scratchattack")

EXIT_ERRORED_RECORDS = 1
EXIT_FAILURE = 2


def toy_manifest_path():
    return Path(str(resources.files("scratchattack") / "data" / "toy" / "manifest.json"))


def _manifest_path(value):
    return toy_manifest_path() if value in (None, "toy") else Path(value)


def _seeds(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None


def _defense(text):
    if text == "median3x3":
        return {"kind": "median3x3"}
    if text.startswith("jpeg:"):
        try:
            return {"kind": "jpeg", "jpeg_quality": int(text[5:])}
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"defense must be 'median3x3' or 'jpeg:<quality>', got {text!r}")


def _oracle_flag(text):
    if text == "toy":
        return {"kind": "toy"}
    if text.startswith(("http://", "https://")):
        return {"kind": "http", "url": text}
    return {"kind": "local", "path": text}


def _add_run_flags(p):
    p.add_argument("--config", help="run configuration JSON; flags override its values")
    p.add_argument("--manifest", help="manifest JSON, or 'toy' for the bundled fixtures")
    p.add_argument("--oracle", type=_oracle_flag, help="'toy', a model JSON path or an http(s) URL")
    p.add_argument("--min-interval", type=float, help="seconds between HTTP oracle requests")
    p.add_argument("--max-retries", type=int, help="HTTP oracle retries per request")
    p.add_argument("--out-dir", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="scratchattack", description="Sparse scratch attacks on image classifiers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="attack every manifest image with every seed")
    _add_run_flags(p)
    p.add_argument("--scratch-count", type=int)
    p.add_argument("--per-scratch-l0", type=int)
    p.add_argument("--bezier-order", type=int)
    p.add_argument("--color-mode")
    p.add_argument("--query-limit", type=int)
    p.add_argument("--strategy", choices=["rs", "de", "pso", "ngo"])
    p.add_argument("--seeds", type=_seeds, help="comma-separated, e.g. 0,1,2,3,4")
    p.add_argument("--targeted", action="store_true", default=None, help="use each entry's target_label")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--records", help="records path (default <out-dir>/records.jsonl)")
    p.add_argument("--summary", help="summary path (default <out-dir>/summary.json)")

    p = sub.add_parser("defend", help="recovery rate and clean accuracy under defenses")
    _add_run_flags(p)
    p.add_argument("--records", required=True)
    p.add_argument("--defense", type=_defense, action="append", dest="defenses",
                   help="'median3x3' or 'jpeg:<quality>'; repeatable")

    p = sub.add_parser("report", help="metric tables and adversarial PNGs from records")
    p.add_argument("--records", required=True)
    p.add_argument("--manifest", help="manifest used for the attack; needed for PNGs")
    p.add_argument("--out-dir", help="output directory (default: next to the records)")

    p = sub.add_parser("rasterize", help="draw one scratch to a PNG")
    p.add_argument("--params", required=True, help="comma-separated x0,y0,...,xn,yn,c0,c1,c2")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--size", type=int, nargs=2, metavar=("H", "W"), default=(32, 32))
    p.add_argument("--image", help="draw on this PNG instead of a black canvas")
    p.add_argument("--k", type=int, help="pixel budget (default: unlimited)")
    p.add_argument("--color-mode", default="polychrome-saturated")
    p.add_argument("--out", required=True)
    return parser


def _config_from_args(args):
    doc = load_config(args.config) if args.config else {}
    flags = {
        "manifest": args.manifest,
        "oracle": args.oracle,
        "output": {"dir": args.out_dir},
    }
    if getattr(args, "command", None) == "attack":
        flags.update(
            attack={
                "scratch_count": args.scratch_count,
                "per_scratch_l0": args.per_scratch_l0,
                "bezier_order": args.bezier_order,
                "color_mode": args.color_mode,
                "query_limit": args.query_limit,
            },
            optimizer={"strategy": args.strategy, "seeds": args.seeds},
            targeted=args.targeted,
            workers=args.workers,
        )
        flags["output"].update(records=args.records, summary=args.summary)
    else:
        flags["defenses"] = args.defenses
    doc = merge(doc, flags)
    if doc.get("oracle", {}).get("kind") == "http":
        doc["oracle"] = merge(doc["oracle"], {"min_interval": args.min_interval, "max_retries": args.max_retries})
    return validate_config(doc)


def _dump_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_attack(args):
    cfg = _config_from_args(args)
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    records_path = Path(cfg["output"].get("records") or out / "records.jsonl")
    summary_path = Path(cfg["output"].get("summary") or out / "summary.json")
    manifest_path = _manifest_path(cfg["manifest"])
    manifest = load_manifest(manifest_path)
    oracle = build_oracle(cfg["oracle"])
    started = time.time()
    summary, records = run_campaign(
        manifest,
        attack_config(cfg),
        oracle,
        cfg["optimizer"]["seeds"],
        strategy=cfg["optimizer"]["strategy"],
        workers=cfg["workers"],
        targeted=cfg["targeted"],
        optimizer_options=cfg["optimizer"]["options"],
    )
    write_records(records_path, records)
    doc = summary.to_dict()
    doc["config"] = {key: cfg[key] for key in ("attack", "optimizer", "oracle", "targeted")}
    doc["manifest"] = str(manifest_path)
    _dump_json(summary_path, doc)
    _dump_json(out / "run_info.json", {
        "started": datetime.datetime.fromtimestamp(started, datetime.timezone.utc).isoformat(),
        "elapsed_seconds": time.time() - started,
        "version": __version__,
        "python": platform.python_version(),
        "records": str(records_path),
        "summary": str(summary_path),
    })
    _print_summary(summary)
    return EXIT_ERRORED_RECORDS if summary.errored else 0


def _fmt(value, std=None, pct=False):
    if value is None:
        return "-"
    text = f"{100 * value:.1f}%" if pct else f"{value:.1f}"
    if std is not None:
        text += f" ± {100 * std:.1f}" if pct else f" ± {std:.1f}"
    return text


def _print_summary(summary):
    print(f"FR {_fmt(summary.fooling_rate, summary.fooling_rate_std, pct=True)}  "
          f"AQ {_fmt(summary.avg_queries, summary.avg_queries_std)}  "
          f"MQ {_fmt(summary.median_queries, summary.median_queries_std)}  "
          f"records {summary.n_records}  skipped {summary.skipped_misclassified}  errored {summary.errored}")


def _write_table(stem, header, rows):
    with open(f"{stem}.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join("-" if v is None or v == "" else str(v) for v in row) + " |" for row in rows]
    Path(f"{stem}.md").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _entries_by_id(manifest_path):
    return {e.image_id: e for e in load_manifest(manifest_path)} if manifest_path else {}


def cmd_report(args):
    records_path = Path(args.records)
    records = read_records(records_path)
    out = Path(args.out_dir) if args.out_dir else records_path.parent
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = args.manifest
    summary_file = records_path.parent / "summary.json"
    if manifest_path is None and summary_file.exists():
        manifest_path = json.loads(summary_file.read_text(encoding="utf-8")).get("manifest")
    summary = summarize(records)
    header = ["seed", "attacked", "successes", "FR", "AQ", "MQ", "skipped", "errored"]
    rows = [
        [m.seed, m.attacked, m.successes, _fmt(m.fooling_rate, pct=True), _fmt(m.avg_queries),
         _fmt(m.median_queries), m.skipped_misclassified, m.errored]
        for m in summary.per_seed
    ]
    if rows:
        rows.append(["mean ± std", sum(m.attacked for m in summary.per_seed),
                     sum(m.successes for m in summary.per_seed),
                     _fmt(summary.fooling_rate, summary.fooling_rate_std, pct=True),
                     _fmt(summary.avg_queries, summary.avg_queries_std),
                     _fmt(summary.median_queries, summary.median_queries_std),
                     summary.skipped_misclassified, summary.errored])
    _write_table(out / "metrics", header, rows)
    entries = _entries_by_id(manifest_path)
    rendered = 0
    if entries:
        (out / "adversarial").mkdir(exist_ok=True)
        for rec in records:
            entry = entries.get(rec.image_id)
            if entry is None or not rec.final_params:
                continue
            image, region = entry.load()
            adv, _ = replay_record(rec, image, region)
            tag = "adv" if rec.success else "best"
            save_png(out / "adversarial" / f"{rec.image_id}_seed{rec.seed}_{tag}.png", adv)
            rendered += 1
    print(f"{len(records)} records, {rendered} images rendered to {out}")
    return 0


def cmd_defend(args):
    cfg = _config_from_args(args)
    defenses = [DefenseSpec(**d) for d in cfg["defenses"]] or [DefenseSpec("median3x3")]
    records = read_records(args.records)
    manifest_path = args.manifest
    summary_file = Path(args.records).parent / "summary.json"
    if manifest_path is None and summary_file.exists():
        manifest_path = json.loads(summary_file.read_text(encoding="utf-8")).get("manifest")
    entries = _entries_by_id(_manifest_path(manifest_path))
    oracle = build_oracle(cfg["oracle"])
    out = Path(args.out_dir) if args.out_dir else Path(args.records).parent
    out.mkdir(parents=True, exist_ok=True)
    images = {i: e.load() for i, e in entries.items()}
    results = []
    for spec in defenses:
        flags = []
        for rec in records:
            if not rec.attacked or rec.image_id not in images:
                continue
            image, region = images[rec.image_id]
            true_label = entries[rec.image_id].label
            defended_ok = None
            if rec.success:
                adv, _ = replay_record(rec, image, region)
                defended_ok = oracle.classify(defend(adv, spec)).label == true_label
            flags.append((rec.clean_label == true_label, rec.success, defended_ok))
        clean_acc, defended_acc, delta = clean_accuracy_delta(
            [images[i][0] for i in sorted(images)], [entries[i].label for i in sorted(images)], oracle, spec
        )
        results.append({
            "defense": spec.name,
            "spec": spec.to_dict(),
            "recovery_rate": recovery_rate(flags),
            "n_successful_attacks": sum(1 for f in flags if f[0] and f[1]),
            "clean_accuracy": clean_acc,
            "defended_accuracy": defended_acc,
            "accuracy_delta": delta,
        })
    _dump_json(out / "defense.json", results)
    header = ["defense", "recovery rate", "clean accuracy", "defended accuracy", "delta"]
    rows = [[r["defense"], _fmt(r["recovery_rate"], pct=True), _fmt(r["clean_accuracy"], pct=True),
             _fmt(r["defended_accuracy"], pct=True), f"{100 * r['accuracy_delta']:+.1f}%"] for r in results]
    _write_table(out / "defense", header, rows)
    for row in rows:
        print("  ".join(str(v) for v in row))
    return 0


def cmd_rasterize(args):
    try:
        values = [float(v) for v in args.params.split(",")]
    except ValueError:
        raise ScratchAttackError(f"--params must be comma-separated numbers, got {args.params!r}") from None
    params = ScratchParams.from_vector(np.array(values), args.order)
    if args.image:
        from .io import load_png

        canvas = load_png(args.image)
    else:
        canvas = np.zeros((args.size[0], args.size[1], 3))
    k = args.k if args.k is not None else canvas.shape[0] * canvas.shape[1]
    out, l0 = apply_scratches(canvas, [params], k, color_mode=args.color_mode)
    save_png(args.out, out)
    print(f"{l0} pixels drawn to {args.out}")
    return 0


COMMANDS = {"attack": cmd_attack, "defend": cmd_defend, "report": cmd_report, "rasterize": cmd_rasterize}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ScratchAttackError, OSError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
