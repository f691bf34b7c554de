"""Command-line pipeline: fit, guide, eval, synth.

Each subcommand reads/writes the JSON interchange files from sessionio and
drops a .manifest.json (input hashes, seed, package version) next to every
primary output. Failures exit nonzero with a one-line JSON error record on
stderr: 2 usage, 3 data/schema, 4 numerical.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time

from . import __version__, sessionio
from .bodymodel import ModelError, pose_body
from .consensus import ConsensusError, aggregate_to_world, frame_world_params, ransac_consensus
from .fitting import FitError, convert_params
from .guidance import GuidanceError, default_rules, generate_all
from .jsonio import SchemaError, read_json
from .metrics import MetricsError, pose_error, summarize
from .synth import SynthConfig, SynthError, generate_session

log = logging.getLogger("probeguide")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class MissingDataError(SchemaError):
    """A required optional section (e.g. recorded_poses) is absent."""


_DATA_ERRORS = (SchemaError, ModelError, FileNotFoundError, IsADirectoryError,
                PermissionError)
_NUMERIC_ERRORS = (FitError, ConsensusError, GuidanceError, SynthError, MetricsError)


def _emit_error(exc: BaseException):
    rec = {"error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(rec) + "\n")


def _manifest(out_path: str, inputs: dict, seed=None):
    sessionio.write_manifest(sessionio.manifest_path_for(out_path), inputs, seed=seed)


def _load(loader, *a, what: str = "input"):
    # bad field values inside otherwise well-formed files are data errors too
    try:
        return loader(*a)
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"invalid {what}: {exc}") from exc


def _base_dir(path: str) -> str:
    return os.path.dirname(os.path.abspath(path))


# ---------------------------------------------------------------------------
# subcommands

def cmd_fit(args) -> int:
    session = sessionio.load_session(args.session)
    run = (_load(sessionio.load_run_config, args.config, what="run config")
           if args.config else sessionio.RunConfig())
    if run.seed is not None:
        run.ransac = dataclasses.replace(run.ransac, seed=run.seed)
    model = sessionio.resolve_model_ref(session.model_ref, session.base_dir)
    t0 = time.perf_counter()
    world_obs = aggregate_to_world(model, session.frames)
    init = [frame_world_params(model, f) for f in session.frames]
    result = ransac_consensus(model, world_obs, run.ransac, run.fit, init_params=init)
    log.info("consensus: %d/%d inliers after %d hypotheses (%.2fs)",
             len(result.inlier_frames), len(session.frames),
             result.hypotheses_evaluated, time.perf_counter() - t0)

    out_model, out_ref, out_flavor = model, None, None
    if args.model and args.model != session.model_ref:
        target = sessionio.resolve_model_ref(args.model, session.base_dir)
        if target.flavor != model.flavor or target.pose_dim != model.pose_dim:
            conv = convert_params(model, result.params, target, run.fit)
            log.info("converted consensus body to %s flavor: rms %.3g m in %d iters",
                     target.flavor, conv.final_rms_m, conv.iterations)
            result = dataclasses.replace(result, params=conv.params, refit=conv)
        out_model, out_ref, out_flavor = target, args.model, target.flavor

    posed = pose_body(out_model, result.params)
    sessionio.write_fit_result(args.out, session, result, posed.thorax_frame,
                               model_ref=out_ref, flavor=out_flavor)
    inputs = {"session": args.session}
    if args.config:
        inputs["config"] = args.config
    _manifest(args.out, inputs, seed=run.ransac.seed)
    if args.scene:
        sessionio.export_scene(args.scene, posed.vertices, out_model.faces, {})
    inlier_rms = [result.per_frame_residual_m[i] for i in result.inlier_frames]
    print(f"fit: {len(result.inlier_frames)}/{len(session.frames)} inlier frames, "
          f"mean inlier residual {1000 * sum(inlier_rms) / len(inlier_rms):.3f} mm "
          f"-> {args.out}")
    return EXIT_OK


def cmd_guide(args) -> int:
    fit = sessionio.load_fit_result(args.fit)
    ref = args.model or fit["model_ref"]
    model = sessionio.resolve_model_ref(ref, _base_dir(args.fit))
    params = fit["params"]
    if model.flavor != fit["flavor"] or model.pose_dim != params.theta.shape[0]:
        raise SchemaError(
            f"fit params are {fit['flavor']}-flavor dim {params.theta.shape[0]}; "
            f"model {ref} is {model.flavor}-flavor dim {model.pose_dim}")
    rules = sessionio.load_rules(args.rules) if args.rules else default_rules()
    body = pose_body(model, params)
    outcomes = generate_all(body, model, rules)
    ok = [o for o in outcomes if o.status == "ok"]
    sessionio.write_guidance_file(args.out, fit["session_id"], ref, fit["flavor"],
                                  body.thorax_frame, outcomes)
    inputs = {"fit": args.fit}
    if args.rules:
        inputs["rules"] = args.rules
    _manifest(args.out, inputs)
    if args.scene:
        sessionio.export_scene(args.scene, body.vertices, model.faces,
                               {o.view_id: o.pose.pose for o in ok})
    for o in outcomes:
        if o.status != "ok":
            log.warning("view %s failed: %s", o.view_id, o.error)
    print(f"guide: {len(ok)}/{len(outcomes)} views placed -> {args.out}")
    return EXIT_OK


_COMPARISONS = ("guided_vs_pred", "pred_vs_gt", "guided_vs_gt")


def cmd_eval(args) -> int:
    session = sessionio.load_session(args.session)
    guidance = sessionio.load_guidance_file(args.guidance)
    if session.recorded_poses is None:
        raise MissingDataError(
            f"session {session.session_id!r} has no recorded_poses; nothing to evaluate")
    if guidance["session_id"] != session.session_id:
        raise SchemaError(f"guidance is for session {guidance['session_id']!r}, "
                          f"not {session.session_id!r}")
    thorax = guidance["thorax_frame"]
    samples, labels, records = [], [], []
    for view in sorted(session.recorded_poses):
        rec = session.recorded_poses[view]
        entry = guidance["views"].get(view)
        pred = entry["pose"] if entry is not None and entry["status"] == "ok" else None
        pairs = {"guided_vs_pred": (rec["guided"], pred),
                 "pred_vs_gt": (pred, rec["ground_truth"]),
                 "guided_vs_gt": (rec["guided"], rec["ground_truth"])}
        for comparison in _COMPARISONS:
            a, b = pairs[comparison]
            if a is None or b is None:
                continue
            err = pose_error(a, b, thorax)
            samples.append(err)
            labels.append(comparison)
            records.append({"view_id": view, "comparison": comparison, **err.to_dict()})
    report = summarize(samples, labels)
    sessionio.write_report_file(args.out, session.session_id, report, records)
    _manifest(args.out, {"session": args.session, "guidance": args.guidance})
    pos = report.overall.pos
    print(f"eval: {len(records)} comparisons over {len(session.recorded_poses)} views, "
          f"overall e_pos {pos.mean:.2f} +/- {pos.std:.2f} mm -> {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    config = _load(SynthConfig.from_dict, read_json(args.config), what="synth config")
    session, gt = generate_session(config)
    sessionio.save_session(args.out_session, session)
    sessionio.write_gt(args.out_gt,
                       session_id=gt.session_id, model_ref=config.model_ref,
                       posture_label=config.posture, flavor=session.flavor,
                       params=gt.params, true_probe_poses=gt.true_probe_poses,
                       outlier_frames=gt.outlier_frames)
    _manifest(args.out_session, {"config": args.config}, seed=config.seed)
    _manifest(args.out_gt, {"config": args.config}, seed=config.seed)
    if args.scene:
        model = sessionio.resolve_model_ref(config.model_ref)
        posed = pose_body(model, gt.params)
        sessionio.export_scene(args.scene, posed.vertices, model.faces,
                               {v: pp.pose for v, pp in gt.true_probe_poses.items()})
    print(f"synth: session {session.session_id} K={len(session.frames)} "
          f"outliers={list(gt.outlier_frames)} -> {args.out_session}, {args.out_gt}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="probeguide",
        description="Body registration and probe-pose guidance pipeline.")
    p.add_argument("--version", action="version", version=f"probeguide {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="consensus-fit a body model to a capture session")
    f.add_argument("--session", required=True, help="capture session JSON")
    f.add_argument("--config", help="run config JSON (fit + RANSAC settings)")
    f.add_argument("--model", help="override model ref; a different flavor "
                                   "triggers optimization-based conversion")
    f.add_argument("--out", required=True, help="fit result JSON to write")
    f.add_argument("--scene", help="also export the consensus body as ASCII PLY")
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("guide", help="generate probe poses from a fit result")
    g.add_argument("--fit", required=True, help="fit result JSON")
    g.add_argument("--model", help="override model ref (must match the fit's flavor)")
    g.add_argument("--rules", help="scan-plane rules JSON (default: built-in ten views)")
    g.add_argument("--out", required=True, help="guidance JSON to write")
    g.add_argument("--scene", help="also export body + probe frames as ASCII PLY")
    g.set_defaults(func=cmd_guide)

    e = sub.add_parser("eval", help="score recorded probe poses against guidance")
    e.add_argument("--session", required=True, help="session JSON with recorded_poses")
    e.add_argument("--guidance", required=True, help="guidance JSON from `guide`")
    e.add_argument("--out", required=True, help="error report JSON to write")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="generate a synthetic session + ground truth")
    s.add_argument("--config", required=True, help="synth config JSON")
    s.add_argument("--out-session", required=True, help="session JSON to write")
    s.add_argument("--out-gt", required=True, help="ground-truth JSON to write")
    s.add_argument("--scene", help="also export the GT body + true poses as ASCII PLY")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    level = os.environ.get("PROBEGUIDE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        _emit_error(exc)
        return EXIT_DATA
    except _NUMERIC_ERRORS as exc:
        _emit_error(exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
