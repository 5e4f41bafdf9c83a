"""Pipeline driver CLI.

Every subcommand is a thin client of the service API: it builds the
request model, then either calls the handler in-process (default) or
POSTs it to a running `xplore serve` instance via --server. Exit codes:
0 success, 1 validation error, 2 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import sys

import pydantic

from . import __version__
from .service import app as service
from .service.schemas import (ClusterRequest, FeaturesRequest, InspectRequest,
                              PipelineConfig, ReportRequest, SynthRequest,
                              TrainRequest, TranslateRequest)


class CliError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the CLI contract reserves 2 for
    # runtime aborts, so route usage problems through the validation path
    def error(self, message):
        raise CliError(message)


def _build_parser() -> Parser:
    p = Parser(prog="xplore", description="attribute discovery + translation pipeline")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="command")

    def stage(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="PipelineConfig JSON with per-stage defaults")
        sp.add_argument("--server", help="base URL of a running service "
                                         "(default: run in-process)")
        return sp

    sp = stage("synth", "generate a synthetic labeled image set (XIM1)")
    sp.add_argument("--out", help="output XIM1 path")
    sp.add_argument("--spec", help='e.g. "6x100" or "red-circle:2,blue-square:2"')
    sp.add_argument("--size", type=int, dest="image_size", help="square image size")
    sp.add_argument("--seed", type=int)

    sp = stage("features", "extract + L2-normalize + PCA-reduce features (XFV1)")
    sp.add_argument("--input", help="XIM1 images or external XFV1 features")
    sp.add_argument("--out", help="output XFV1 path")
    sp.add_argument("--downsample", type=int)
    sp.add_argument("--pca-dim", type=int, dest="pca_dim")

    sp = stage("cluster", "k-means pseudo-labeling (XCM1)")
    sp.add_argument("--features", help="input XFV1 path")
    sp.add_argument("--out", help="output XCM1 path")
    sp.add_argument("--k", type=int)
    sp.add_argument("--init", choices=["kmeanspp", "random"])
    sp.add_argument("--restarts", type=int)
    sp.add_argument("--max-iters", type=int, dest="max_iters")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--images", help="XIM1 with truth labels, reports NMI/ARI")

    sp = stage("inspect-clusters", "per-cluster montages and a stats table")
    sp.add_argument("--images")
    sp.add_argument("--model", help="XCM1 path")
    sp.add_argument("--out-dir", dest="out_dir")
    sp.add_argument("--max-per-cluster", type=int, dest="max_per_cluster")

    sp = stage("train", "train the translator (XCK1 + metrics log)")
    sp.add_argument("--images")
    sp.add_argument("--model", help="XCM1 path")
    sp.add_argument("--out", dest="out_checkpoint", help="output XCK1 path")
    sp.add_argument("--metrics", help="output metrics TSV path")
    sp.add_argument("--preset", choices=["desk", "paper"])
    sp.add_argument("--cond-mode", dest="cond_mode",
                    choices=["mu_sigma", "mu_only", "label_embed"])
    sp.add_argument("--seed", type=int)
    sp.add_argument("--resume", dest="resume_from", help="checkpoint to continue from")
    sp.add_argument("--steps", type=int, dest="total_steps")
    sp.add_argument("--batch-size", type=int, dest="batch_size")
    sp.add_argument("--n-critic", type=int, dest="n_critic")
    sp.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    sp.add_argument("--lr", type=float)
    sp.add_argument("--base-width", type=int, dest="base_width")
    sp.add_argument("--image-size", type=int, dest="image_size")
    for lam in ("cls", "rec", "lnt", "gp"):
        sp.add_argument(f"--lambda-{lam}", type=float, dest=f"lambda_{lam}")

    sp = stage("translate", "translate images toward a target cluster (XIM1)")
    sp.add_argument("--checkpoint", help="XCK1 path")
    sp.add_argument("--images")
    sp.add_argument("--cluster", type=int)
    sp.add_argument("--out", help="output XIM1 path")
    sp.add_argument("--noise-seed", type=int, dest="noise_seed")
    sp.add_argument("--montage", help="optional PPM preview path")

    sp = stage("report", "summarize a metrics log")
    sp.add_argument("--metrics")
    sp.add_argument("--out")

    stage("selftest", "run every module's invariant suite")

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8765)
    return p


STAGES = {
    "synth": (SynthRequest, service.do_synth, "synth"),
    "features": (FeaturesRequest, service.do_features, "features"),
    "cluster": (ClusterRequest, service.do_cluster, "cluster"),
    "inspect-clusters": (InspectRequest, service.do_inspect, "inspect-clusters"),
    "train": (TrainRequest, service.do_train, "train"),
    "translate": (TranslateRequest, service.do_translate, "translate"),
    "report": (ReportRequest, service.do_report, "report"),
}

CONFIG_SECTIONS = {"inspect-clusters": "inspect_clusters"}


def _load_config(path) -> PipelineConfig:
    try:
        with open(path) as fh:
            return PipelineConfig(**json.load(fh))
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise CliError(f"config file is not valid JSON: {e}")
    except pydantic.ValidationError as e:
        raise CliError(f"invalid config: {e}")


def _request_body(args, command) -> dict:
    body = {}
    if args.config:
        cfg = _load_config(args.config)
        section = getattr(cfg, CONFIG_SECTIONS.get(command, command))
        body.update(section)
        if cfg.seed is not None and "seed" not in body:
            body["seed"] = cfg.seed
    skip = {"command", "config", "server"}
    for key, value in vars(args).items():
        if key not in skip and value is not None:
            body[key] = value
    return body


def _print_summary(command, resp) -> None:
    data = resp.model_dump()
    if command == "cluster":
        sizes = data.pop("sizes")
        print(f"wrote {data['path']}: k={data['k']} inertia={data['inertia']:.6e} "
              f"sizes={sizes}")
        if data.get("nmi") is not None:
            print(f"NMI {data['nmi']:.4f}  ARI {data['ari']:.4f}")
    elif command == "train":
        print(f"wrote {data['checkpoint']} after {data['steps']} steps "
              f"(metrics: {data['metrics']})")
        final = data.get("final") or {}
        if final:
            print("final: " + "  ".join(f"{k}={v:.4e}" for k, v in final.items()))
    else:
        print(json.dumps(data, indent=2))


def _run_remote(server, path, body) -> int:
    import httpx

    url = f"{server.rstrip('/')}/v1/{path}"
    reply = httpx.post(url, json=body, timeout=None)
    if reply.status_code == 200:
        print(json.dumps(reply.json(), indent=2))
        return 0
    try:
        payload = reply.json()
    except ValueError:
        payload = {"kind": "runtime", "message": reply.text}
    print(f"error ({payload.get('kind', 'unknown')}): {payload.get('message')}",
          file=sys.stderr)
    return 1 if payload.get("kind") == "validation" else 2


def _run_selftest(args) -> int:
    if getattr(args, "server", None):
        import httpx

        reply = httpx.post(f"{args.server.rstrip('/')}/v1/selftest", timeout=None)
        data = reply.json()
        suites = {k: (v["ok"], v["detail"]) for k, v in data["suites"].items()}
        ok = data["ok"]
    else:
        from .selftest import run_selftest

        suites = run_selftest()
        ok = all(good for good, _ in suites.values())
    for name, (good, detail) in sorted(suites.items()):
        print(f"[{'PASS' if good else 'FAIL'}] {name}: {detail}")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        if args.command == "serve":
            import uvicorn

            uvicorn.run(service.create_app(), host=args.host, port=args.port)
            return 0
        if args.command == "selftest":
            return _run_selftest(args)

        model_cls, handler, path = STAGES[args.command]
        body = _request_body(args, args.command)
        if getattr(args, "server", None):
            return _run_remote(args.server, path, body)
        try:
            request = model_cls(**body)
        except pydantic.ValidationError as e:
            raise CliError(str(e))
        resp = handler(request)
        _print_summary(args.command, resp)
        return 0
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except service.VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except service.RUNTIME_ERRORS as e:
        print(f"runtime abort: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
