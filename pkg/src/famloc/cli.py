"""Command-line surface binding the pipeline end to end.

Subcommands: fam, localize, evaluate, tune, classify, joint-eval.
Exit codes: 0 success, 1 validation/usage error, 2 I/O error.
Precedence: CLI flags > config file > built-in defaults; the effective
config is echoed into the output directory for reproducibility.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import grids, head as head_mod, io as io_mod, joint, metrics, tune
from .errors import ValidationError
from .localize import LocalizerParams, propose_boxes
from .metrics import Prediction

DEFAULTS = {
    "t": 0.4,
    "s": 0.1,
    "e": 0.2,
    "gate": 0.5,
    "min_iou": 0.5,
    "iou_grid": "0.05:0.95:0.05",
}


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def parse_iou_grid(text: str) -> list:
    """Parse "start:stop:step" into an inclusive ascending threshold list."""
    try:
        start, stop, step = (float(p) for p in text.split(":"))
    except ValueError as e:
        raise ValidationError(f"bad --iou-grid {text!r}, expected start:stop:step") from e
    if step <= 0 or stop < start:
        raise ValidationError(f"bad --iou-grid {text!r}: need step > 0 and stop >= start")
    values = []
    i = 0
    while True:
        v = round(start + i * step, 10)
        if v > stop + 1e-9:
            break
        values.append(v)
        i += 1
    return values


def _parse_value_list(text: str) -> list:
    return [float(p) for p in text.split(",") if p.strip()]


def _effective_config(args, keys):
    """Merge defaults, config file, and explicit CLI flags for the given keys."""
    config = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            loaded = json.loads(path.read_text())
        except OSError as e:
            raise OSError(f"failed reading config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: invalid JSON: {e}") from e
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ValidationError(f"{path}: unknown config keys {sorted(unknown)}")
        config.update(loaded)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return {k: config[k] for k in keys}


def _echo_config(config: dict, out_dir: Path) -> None:
    with open(out_dir / "effective_config.json", "w") as f:
        json.dump(config, f, indent=2, sort_keys=True)
        f.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fam(args) -> int:
    stack = grids.read_fstk(args.stack)
    weights = grids.read_weight_vector(args.weights)
    fam = grids.compute_fam(stack, weights)
    out = _out_dir(args)
    grids.export_heatmap(fam, out / "fam.pgm")
    with open(out / "fam.json", "w") as f:
        json.dump(
            {"height": fam.height, "width": fam.width, "values": fam.values.tolist()}, f
        )
        f.write("\n")
    return 0


def _load_validation(args, config):
    """Run the classifier head over a manifest, returning ValidationItems
    (ground truth lists empty unless annotation files are available)."""
    manifest = io_mod.load_manifest(args.manifest)
    bank, sm_head = head_mod.read_head(args.weights)
    gts_all = {}
    if getattr(args, "gt", None):
        gts_all = io_mod.read_ground_truth(args.gt)
    gt_cache = {}
    items = []
    for entry in manifest:
        stack = grids.read_fstk(entry.stack_path)
        decision, fam = head_mod.forward(stack, bank, sm_head, gate=config["gate"])
        gts = gts_all.get(entry.image_id)
        if gts is None and entry.gt_path is not None:
            if entry.gt_path not in gt_cache:
                gt_cache[entry.gt_path] = io_mod.read_ground_truth(entry.gt_path)
            gts = gt_cache[entry.gt_path].get(entry.image_id)
        items.append(
            tune.ValidationItem(
                image_id=entry.image_id,
                grid=fam,
                decision=decision,
                gts=gts or [],
                img_h=entry.height,
                img_w=entry.width,
            )
        )
    return items


def cmd_localize(args) -> int:
    config = _effective_config(args, ["t", "s", "e", "gate"])
    params = LocalizerParams(t=config["t"], s=config["s"], e=config["e"])
    items = _load_validation(args, config)
    preds_by_image = {}
    sizes = {}
    for item in items:
        boxes = propose_boxes(item.grid, item.decision, params, item.img_h, item.img_w)
        preds_by_image[item.image_id] = [
            Prediction(box=b, image_id=item.image_id) for b in boxes
        ]
        sizes[item.image_id] = (item.img_w, item.img_h)
    out = _out_dir(args)
    io_mod.write_predictions(preds_by_image, out / "predictions.jsonl", sizes=sizes)
    _echo_config(config, out)
    return 0


def cmd_evaluate(args) -> int:
    config = _effective_config(args, ["iou_grid"])
    grid = parse_iou_grid(config["iou_grid"])
    preds = io_mod.read_predictions(args.predictions)
    gts = io_mod.read_ground_truth(args.gt)
    points = metrics.curves(preds, gts, grid)
    out = _out_dir(args)
    metrics.write_curves_csv(points, out / "curves.csv")
    _echo_config(config, out)
    return 0


def cmd_tune(args) -> int:
    config = _effective_config(args, ["gate", "iou_grid"])
    grid = parse_iou_grid(config["iou_grid"])
    spec_kwargs = {}
    for name in ("t_values", "s_values", "e_values"):
        value = getattr(args, name, None)
        if value is not None:
            spec_kwargs[name] = _parse_value_list(value)
    spec = tune.GridSpec(**spec_kwargs)
    items = _load_validation(args, config)
    result = tune.grid_search(items, spec, grid)
    out = _out_dir(args)
    tune.write_table_csv(result, out / "tune_table.csv")
    tune.write_best_json(result, out / "best_params.json")
    _echo_config(config, out)
    return 0


def _make_classifier(spec_text: str, gt_path):
    if spec_text == "oracle":
        if not gt_path:
            raise ValidationError("--classifier oracle requires --gt")
        return joint.OracleClassifier(io_mod.read_ground_truth(gt_path))
    if spec_text.startswith("constant:"):
        return joint.ConstantClassifier(spec_text.split(":", 1)[1])
    if spec_text.startswith("file:"):
        return joint.FileClassifier(
            io_mod.read_labeled_predictions(spec_text.split(":", 1)[1])
        )
    raise ValidationError(
        f"bad --classifier {spec_text!r}; expected file:PATH, oracle, or constant:LABEL"
    )


def cmd_classify(args) -> int:
    source = _make_classifier(args.classifier, getattr(args, "gt", None))
    preds = io_mod.read_predictions(args.predictions)
    labeled = {
        image_id: joint.classify_boxes(boxes, source)
        for image_id, boxes in preds.items()
    }
    out = _out_dir(args)
    io_mod.write_labeled_predictions(labeled, out / "labeled.jsonl")
    return 0


def cmd_joint_eval(args) -> int:
    config = _effective_config(args, ["min_iou"])
    labeled = io_mod.read_labeled_predictions(args.predictions)
    gts = io_mod.read_ground_truth(args.gt)
    result = joint.joint_evaluate(labeled, gts, min_iou=config["min_iou"])
    out = _out_dir(args)
    joint.write_class_metrics_csv(result, out / "joint.csv")
    with open(out / "joint.json", "w") as f:
        json.dump(joint.class_metrics_to_dict(result), f, indent=2, sort_keys=True)
        f.write("\n")
    _echo_config(config, out)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="famloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="JSON config file (flags override it)")
        return p

    p = add("fam", cmd_fam, help="compute an activation map from a feature stack")
    p.add_argument("--stack", required=True, help="FSTK feature-stack file")
    p.add_argument("--weights", required=True, help="weight-vector JSON")

    p = add("localize", cmd_localize, help="propose boxes over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", required=True, help="classifier-head JSON")
    for flag in ("--t", "--s", "--e", "--gate"):
        p.add_argument(flag, type=float)

    p = add("evaluate", cmd_evaluate, help="precision/recall/accuracy curves")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou-grid", dest="iou_grid", help='e.g. "0.05:0.95:0.05"')

    p = add("tune", cmd_tune, help="grid search over {t, s, e}")
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", required=True, help="classifier-head JSON")
    p.add_argument("--gt", help="ground-truth JSONL (else per-entry refs)")
    p.add_argument("--gate", type=float)
    p.add_argument("--iou-grid", dest="iou_grid")
    p.add_argument("--t-values", dest="t_values", help="comma-separated")
    p.add_argument("--s-values", dest="s_values", help="comma-separated")
    p.add_argument("--e-values", dest="e_values", help="comma-separated")

    p = add("classify", cmd_classify, help="label proposal boxes")
    p.add_argument("--predictions", required=True)
    p.add_argument("--classifier", required=True, help="file:PATH | oracle | constant:LABEL")
    p.add_argument("--gt", help="ground truth, required for the oracle source")

    p = add("joint-eval", cmd_joint_eval, help="per-class joint localization+recognition metrics")
    p.add_argument("--predictions", required=True, help="labeled predictions JSONL")
    p.add_argument("--gt", required=True)
    p.add_argument("--min-iou", dest="min_iou", type=float)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"famloc: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"famloc: i/o error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
