"""Operator entry point.

Subcommands:
    provision        write a manifest store, trust file, and device records
    scan             run a short discovery scan and print reports as JSON lines
    scenario run     execute a scenario config, emit metrics JSON + CSV
    analytic         ubusy / bandwidth / table1 closed-form evaluations
    lkh demo         key-tree stats, a traversal trace, and overhead counts
    im solicit       one inventory round against a simulated fleet
    wire decode      parse a hex payload and dump its fields

Scenario paths are resolved against PULLDISC_CONFIG_DIR when not found
directly. Every subcommand is deterministic given its inputs and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from random import Random

from . import __version__, analytics, crypto, inventory, keytree, registration, scenario, wire

CONFIG_DIR_ENV = "PULLDISC_CONFIG_DIR"


def _resolve_config(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    base = os.environ.get(CONFIG_DIR_ENV)
    if base and (Path(base) / path).exists():
        return Path(base) / path
    return p  # let the loader produce the error


def _cmd_provision(args) -> int:
    rng = Random(args.seed)
    mfr = crypto.generate_keypair(rng)
    store = registration.ManifestStore()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(args.count):
        descriptor = registration.DeviceDescriptor(
            device_type=args.device_type,
            sensors_actuators=tuple(args.sensor),
            software_version="1.0",
            coarse_location=args.location,
            software_image=f"image/{i}".encode(),
            full_url=f"https://devices.example/{i}",
        )
        record = registration.provision_db_device(
            mfr, descriptor,
            t_att=args.t_att, t_gen=args.t_gen, pool_max=args.pool_max,
            store=store, rng=rng,
        )
        records.append(
            {
                "device": i,
                "url": record.url.decode("ascii"),
                "public_key": record.keypair.public_key.hex(),
                "private_key": record.keypair.private_key.hex(),
                "software_hash": record.software_hash.hex(),
                "t_att": record.t_att,
                "t_gen": record.t_gen,
                "pool_max": record.pool_max,
            }
        )
    store.save_dir(out / "manifests")
    registration.write_trust_file(out / "trust.keys", [mfr.public_key])
    (out / "devices.json").write_text(json.dumps(records, indent=2) + "\n")
    print(f"provisioned {args.count} device(s) under {out}")
    return 0


def _cmd_scan(args) -> int:
    config = scenario.ScenarioConfig.load(_resolve_config(args.config))
    built, _report = scenario.run_scenario(config)
    for node in built.agent_nodes:
        for report in node.deduped_reports():
            doc = {"user": node.name}
            doc.update(report.to_json_fields())
            print(json.dumps(doc, sort_keys=True))
    return 0


def _run_one_seed(config_doc: dict, seed: int, out_dir: str) -> str:
    doc = dict(config_doc)
    doc["seed"] = seed
    config = scenario.ScenarioConfig.from_dict(doc)
    _, report = scenario.run_scenario(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "metrics.json").write_text(report.metrics.to_json() + "\n")
    (out / "metrics.csv").write_text(scenario.metrics_csv(report.metrics))
    return str(out / "report.json")


def _cmd_scenario_run(args) -> int:
    try:
        config = scenario.ScenarioConfig.load(_resolve_config(args.config))
    except scenario.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.sweep:
        # Runs are isolated, so seeds fan out across processes.
        from concurrent.futures import ProcessPoolExecutor

        seeds = [int(s) for s in args.sweep.split(",")]
        base = Path(args.out or config.output or ".")
        doc = config.to_dict()
        with ProcessPoolExecutor() as pool:
            written = list(
                pool.map(
                    _run_one_seed,
                    [doc] * len(seeds),
                    seeds,
                    [str(base / f"seed-{s}") for s in seeds],
                )
            )
        for path in written:
            print(f"wrote {path}")
        return 0

    built, report = scenario.run_scenario(config)
    out = Path(args.out or config.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "metrics.json").write_text(report.metrics.to_json() + "\n")
    (out / "metrics.csv").write_text(scenario.metrics_csv(report.metrics))
    print(f"wrote {out / 'report.json'}, {out / 'metrics.json'}, {out / 'metrics.csv'}")
    ok = all(report.checks.values())
    if not ok:
        failing = [k for k, v in report.checks.items() if not v]
        print(f"sanity checks failed: {failing}", file=sys.stderr)
    return 0 if ok else 1


def _cmd_analytic(args) -> int:
    model = analytics.CostModel(t_ann=args.t_ann, t_res=args.t_res)
    if args.which == "ubusy":
        if args.push_interval is not None:
            value = analytics.ubusy_push(model, args.push_interval, args.form)
        else:
            value = analytics.ubusy_pull(model, args.t_req, args.form)
        print(f"{100.0 * value:.4f}")
        return 0
    if args.which == "bandwidth":
        if args.push_interval is not None:
            bps = analytics.bandwidth_push(args.announcement_size, args.push_interval)
        else:
            sc = analytics.ScenarioModel(
                crowded_hours=args.crowded_hours,
                crowded_t_req=args.t_req,
                offpeak_per_hour=args.offpeak_per_hour,
                t_gen=args.t_gen,
            )
            bps = analytics.bandwidth_pull(sc)
        print(f"{bps:.2f}")
        return 0
    # table1: the five-row usage grid
    print(analytics.usage_grid(model, form=args.form), end="")
    return 0


def _cmd_lkh_demo(args) -> int:
    rng = Random(args.seed)
    tree = keytree.build_tree(args.n, args.p, rng)
    counts = keytree.storage_counts(tree)
    print(f"devices={tree.leaf_count} arity={tree.arity} padded={tree.padded_leaves} height={tree.height}")
    print(
        f"device_keys={counts.device_keys} owner_keys={counts.owner_keys} "
        f"header_bytes={counts.header_bytes}"
    )
    target = args.device if args.device is not None else rng.randrange(tree.leaf_count)
    nonce = rng.randbytes(wire.NONCE_LEN)
    vector = keytree.device_key_vector(tree, target)
    header = keytree.build_header(vector, nonce)
    print(f"trace: device {target}, nonce {nonce.hex()}, header of {len(header)} fields")
    node = 0
    evals = 0
    for level in range(tree.height):
        first_child = tree.arity * node + 1
        chosen = first_child + tree.arity - 1
        checked = 0
        for q in range(tree.arity - 1):
            checked += 1
            if crypto.prf_eval(tree.node_keys[first_child + q], nonce) == header[level]:
                chosen = first_child + q
                break
        evals += checked
        print(f"  level {level + 1}: checked {checked} child key(s) -> node {chosen}")
        node = chosen
    index = node - tree.first_leaf
    confirmed, confirmed_evals = keytree.retrieve_lkh(tree, header, nonce)
    assert (confirmed, confirmed_evals) == (index, evals)
    print(f"retrieved device {index} with {evals} PRF evaluations "
          f"(bound {(tree.arity - 1) * tree.height})")
    return 0 if index == target else 1


def _cmd_im_solicit(args) -> int:
    rng = Random(args.seed)
    owner = inventory.Owner(crypto.generate_keypair(rng), Random(args.seed + 1))
    image = b"inventory-image"
    infos = [
        inventory.build_device_info(f"unit-{i:07d}".encode(), type_code=7, sw_version=3)
        for i in range(args.devices)
    ]
    if args.mode == "lkh":
        devices = owner.enroll_lkh_fleet(infos, image, args.p, rng)
    else:
        devices = [owner.enroll_naive(info, image, rng) for info in infos]
    request = owner.make_request()
    for dev in devices:
        response = dev.respond(request)
        result = owner.receive(response)
        if isinstance(result, inventory.ImReceipt):
            device_id, type_code, version = inventory.parse_device_info(result.device_info)
            print(json.dumps({
                "device_id": device_id.decode("ascii", "replace"),
                "attestation": "success" if result.att_result == wire.ATT_SUCCESS else "fail",
                "type_code": type_code,
                "sw_version": version,
                "trials": result.trials,
                "prf_evals": result.prf_evals,
            }, sort_keys=True))
        else:
            print(json.dumps({"reject": result.value}, sort_keys=True))
    return 0


def _cmd_wire_decode(args) -> int:
    if args.hex:
        try:
            data = bytes.fromhex(args.hex)
        except ValueError:
            print("error: not valid hex", file=sys.stderr)
            return 2
    else:
        data = Path(args.file).read_bytes()
    try:
        message = wire.decode(data)
    except wire.WireError as exc:
        offset = getattr(exc, "offset", None)
        where = f" at byte {offset}" if offset is not None else ""
        print(f"error: {exc.args[0] if exc.args else exc}{where}", file=sys.stderr)
        return 1
    print(f"kind: {type(message).__name__}")
    print(f"length: {len(data)}")
    if isinstance(message, wire.RequestMsg):
        print(f"nonce: {message.nonce.hex()}")
    elif isinstance(message, (wire.ResponseMsg, wire.AnnouncementMsg)):
        if isinstance(message, wire.ResponseMsg):
            print(f"count: {message.count}")
            for i, n in enumerate(message.pooled_nonces):
                print(f"pooled[{i}]: {n.hex()}")
        print(f"device_nonce: {message.device_nonce.hex()}")
        print(f"url: {message.url.decode('ascii')}")
        print(f"att_result: {'success' if message.att_report.result else 'fail'}")
        print(f"att_age_s: {message.att_report.seconds_since}")
        print(f"signed_region: {wire.signed_region(message).hex()}")
        print(f"signature: {message.signature.hex()}")
    elif isinstance(message, wire.ImRequestMsg):
        print(f"owner_nonce: {message.owner_nonce.hex()}")
        print(f"signed_region: {wire.signed_region(message).hex()}")
        print(f"signature: {message.signature.hex()}")
    elif isinstance(message, wire.ImResponseMsg):
        print(f"header_fields: {len(message.lkh_header)}")
        for i, f in enumerate(message.lkh_header):
            print(f"header[{i}]: {f.hex()}")
        print(f"iv: {message.iv.hex()}")
        print(f"ciphertext: {message.ciphertext.hex()}")
        print(f"tag: {message.tag.hex()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pulldisc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pulldisc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("provision", help="provision devices and write a manifest store")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--device-type", default="sensor")
    p.add_argument("--sensor", action="append", default=["temperature"])
    p.add_argument("--location", default="site")
    p.add_argument("--t-att", type=float, default=300.0)
    p.add_argument("--t-gen", type=float, default=1.0)
    p.add_argument("--pool-max", type=int, default=wire.RESPONSE_MAX_NONCES)
    p.set_defaults(fn=_cmd_provision)

    p = sub.add_parser("scan", help="run a scenario and print device reports")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_scan)

    p = sub.add_parser("scenario", help="scenario operations")
    ssub = p.add_subparsers(dest="scenario_command", required=True)
    pr = ssub.add_parser("run", help="execute a scenario config")
    pr.add_argument("--config", required=True)
    pr.add_argument("--out", default=None)
    pr.add_argument("--sweep", default=None, metavar="SEEDS",
                    help="comma-separated seeds to run in parallel, one output dir each")
    pr.set_defaults(fn=_cmd_scenario_run)

    p = sub.add_parser("analytic", help="closed-form usage / bandwidth models")
    p.add_argument("which", choices=["ubusy", "bandwidth", "table1"])
    p.add_argument("--form", choices=["inclusive", "exclusive"], default="inclusive")
    p.add_argument("--t-ann", type=float, default=0.235)
    p.add_argument("--t-res", type=float, default=0.233)
    p.add_argument("--t-req", type=float, default=10.0)
    p.add_argument("--t-gen", type=float, default=1.0)
    p.add_argument("--push-interval", type=float, default=None)
    p.add_argument("--announcement-size", type=int, default=128)
    p.add_argument("--crowded-hours", type=float, default=16.0)
    p.add_argument("--offpeak-per-hour", type=float, default=10.0)
    p.set_defaults(fn=_cmd_analytic)

    p = sub.add_parser("lkh", help="key-tree operations")
    lsub = p.add_subparsers(dest="lkh_command", required=True)
    pd = lsub.add_parser("demo", help="tree stats and a traversal trace")
    pd.add_argument("--n", type=int, required=True)
    pd.add_argument("--p", type=int, default=2)
    pd.add_argument("--seed", type=int, required=True)
    pd.add_argument("--device", type=int, default=None)
    pd.set_defaults(fn=_cmd_lkh_demo)

    p = sub.add_parser("im", help="inventory-mode operations")
    isub = p.add_subparsers(dest="im_command", required=True)
    ps = isub.add_parser("solicit", help="one request/response round against a fleet")
    ps.add_argument("--devices", type=int, default=10)
    ps.add_argument("--mode", choices=["naive", "lkh"], default="naive")
    ps.add_argument("--p", type=int, default=2)
    ps.add_argument("--seed", type=int, required=True)
    ps.set_defaults(fn=_cmd_im_solicit)

    p = sub.add_parser("wire", help="wire format debugging")
    wsub = p.add_subparsers(dest="wire_command", required=True)
    pw = wsub.add_parser("decode", help="parse a payload and dump fields")
    group = pw.add_mutually_exclusive_group(required=True)
    group.add_argument("--hex")
    group.add_argument("--file")
    pw.set_defaults(fn=_cmd_wire_decode)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
