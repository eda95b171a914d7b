"""Command-line entry point (``mmo-arena`` / ``python -m mmo_arena``).

Failures exit nonzero after printing one JSON line to stderr:
``{"error": "<ExceptionType>", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ArenaConfig, desk_config
from .orchestrator.pve import Gates, Submission, advance_stage, evaluate_pve
from .orchestrator.tournament import new_tournament, run_tournament
from .policies.registry import make_policy, validate_spec
from .replay import read_replay


class CliError(Exception):
    pass


def _config(args) -> ArenaConfig:
    if getattr(args, "config_file", None):
        return ArenaConfig.from_dict(json.loads(Path(args.config_file).read_text()))
    cfg = desk_config() if args.scale == "desk" else ArenaConfig()
    if getattr(args, "size", None):
        cfg = cfg.replace(map_size=args.size)
    return cfg


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", choices=("full", "desk"), default="full",
                   help="full: 128 tiles, 1024 ticks; desk: 64 tiles, 256 ticks")
    p.add_argument("--config-file", help="JSON ArenaConfig overriding --scale")


def _split_specs(items: list[str]) -> list[str]:
    out = []
    for it in items:
        out += [s for s in it.split(",") if s] if not it.startswith("exec:") else [it]
    return out


def _replay_files(paths: list[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        files += sorted(p.rglob("*.jsonl")) if p.is_dir() else [p]
    if not files:
        raise CliError("no replay files found")
    return files


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_gen_map(args) -> None:
    from .sim.mapgen import generate_map

    m = generate_map(args.seed, _config(args))
    m.save(args.out)
    print(json.dumps({"out": args.out, "size": m.size, "digest": m.digest()}))


def cmd_run_match(args) -> None:
    from .sim.episode import run_episode
    from .sim.mapgen import generate_map

    cfg = _config(args)
    specs = _split_specs(args.teams)
    if len(specs) != cfg.team_count:
        raise CliError(f"--teams needs {cfg.team_count} policy specs, got {len(specs)}")
    for s in specs:
        validate_spec(s)
    from .orchestrator.pool import MatchDescriptor

    desc = MatchDescriptor(0, args.seed, tuple(f"builtin:{s}#{t}" for t, s in enumerate(specs)), tuple(specs),
                           cfg.to_dict())
    game_map = generate_map(desc.map_seed, cfg)
    policies = [make_policy(s) for s in specs]
    if args.replay:
        with open(args.replay, "wb") as fh:
            out = run_episode(game_map, policies, args.seed, cfg, desc.entrants, fh)
    else:
        out = run_episode(game_map, policies, args.seed, cfg, desc.entrants)
    print(out.result.to_json())


def cmd_eval_pve(args) -> None:
    cfg = _config(args)
    gates = Gates()
    if args.registry:
        from .store import Registry

        with Registry(args.registry) as reg:
            res = reg.evaluate(args.submission, args.stage, cfg, args.seed, args.parallelism, gates, args.matches)
            sub = reg.get(args.submission)
    else:
        validate_spec(args.submission)
        sub = Submission("submission", args.submission)
        res = evaluate_pve(sub, args.stage, cfg, args.seed, args.matches, args.parallelism, args.replay_dir,
                           check_eligible=False)
        advance_stage(sub, res, gates)
    gate = gates.promote.get(args.stage)
    verdict = "PASS" if gate is not None and res.top1_ratio >= gate else ("FAIL" if gate is not None else "N/A")
    print(json.dumps({
        "stage": args.stage, "top1_ratio": res.top1_ratio, "gate": gate, "verdict": verdict,
        "best_achievement": res.best_achievement, "state": sub.state.name, "pvp_qualified": sub.pvp_qualified,
        "failures": len(res.failures),
    }))
    print(f"stage {args.stage}: Top1Ratio {res.top1_ratio:.2f} vs gate {gate} -> {verdict}", file=sys.stderr)


def _read_roster(path: str) -> dict[str, str]:
    """Roster file: one ``<id> <policy spec>`` per line; '#' starts a comment."""
    roster = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip() if not line.lstrip().startswith("exec:") else line.strip()
        if not line:
            continue
        sid, _, spec = line.partition(" ")
        if not spec.strip():
            raise CliError(f"roster line without a spec: {line!r}")
        if sid in roster:
            raise CliError(f"duplicate roster id {sid!r}")
        roster[sid] = validate_spec(spec.strip())
    return roster


def _print_board(rows, as_json: bool, out: str | None = None) -> None:
    if as_json:
        text = "".join(json.dumps(r.to_dict()) + "\n" for r in rows)
    else:
        text = f"{'rank':>4}  {'id':<16} {'mu':>8} {'sigma':>7} {'score':>8} {'matches':>7}\n"
        text += "".join(f"{r.rank:>4}  {r.id:<16} {r.mu:8.3f} {r.sigma:7.3f} {r.score:8.3f} {r.matches:>7}\n"
                        for r in rows)
    _emit(text, out)


def cmd_tournament(args) -> None:
    progress = (lambda line: print(line, file=sys.stderr)) if args.verbose else None
    if args.registry:
        from .store import Registry

        with Registry(args.registry) as reg:
            tid = reg.active_tournament()
            if tid is None:
                tid = reg.start_tournament(args.target, args.seed, _config(args), args.reset, args.stand_in)
            rows = reg.run_tournament(tid, args.parallelism, progress)
    else:
        if not args.roster:
            raise CliError("tournament needs --roster or --registry")
        state = new_tournament(_read_roster(args.roster))
        rows = run_tournament(state, args.target, args.parallelism, args.seed, _config(args),
                              stand_in=args.stand_in, replay_dir=args.replay_dir, progress=progress)
    _print_board(rows, args.json, args.out)


def cmd_leaderboard(args) -> None:
    from .store import Registry

    reg = Registry(args.registry)
    _print_board(reg.leaderboard(args.k), args.json)


def cmd_register(args) -> None:
    from .store import Registry

    with Registry(args.registry, create=True) as reg:
        sub = reg.register(args.spec, args.name or "", args.id)
        if args.pvp:
            sub.pvp_qualified = True
            reg.save(sub)
    print(json.dumps(sub.to_dict()))


def cmd_analyze(args) -> None:
    import io

    from . import analytics

    files = _replay_files(args.inputs)
    buf = io.StringIO()
    if args.kind == "heatmap":
        if not args.policy:
            raise CliError("heatmap needs --policy")
        h = analytics.visitation_heatmap(files, args.policy)
        h.to_csv(buf)
        print(json.dumps({"policy": args.policy, "episodes": h.episodes, "teams": h.teams, "mass": h.mass,
                          "edge_fraction": analytics.edge_mass_fraction(h)}), file=sys.stderr)
    elif args.kind == "trajectory":
        if args.team is None:
            raise CliError("trajectory needs --team")
        if len(files) != 1:
            raise CliError("trajectory takes exactly one replay")
        team = int(args.team) if args.team.isdigit() else args.team
        analytics.write_trajectories(analytics.team_trajectories(files[0], team), buf)
    else:
        if not args.policy:
            raise CliError("radar needs --policy")
        from .scoring import MatchResult

        results = [MatchResult.from_dict(read_replay(f).footer["result"]) for f in files]
        analytics.subtask_breakdown(results, args.policy).to_csv(buf)
    _emit(buf.getvalue(), args.out)


def cmd_replay_verify(args) -> None:
    from .analytics import check_replay

    rec = read_replay(args.file)
    problems = check_replay(rec)
    if problems:
        raise CliError("scorer mismatch: " + "; ".join(problems))
    print(json.dumps({"file": args.file, "digest": rec.digest, "ticks": len(rec.ticks), "ok": True}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmo-arena", description="Free-for-all arena evaluation platform.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-map", help="generate a map file")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--size", type=int)
    g.add_argument("--out", required=True)
    _add_config(g)
    g.set_defaults(func=cmd_gen_map)

    r = sub.add_parser("run-match", help="play one episode and print its MatchResult")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--teams", nargs="+", required=True, help="policy specs, space or comma separated")
    r.add_argument("--replay")
    _add_config(r)
    r.set_defaults(func=cmd_run_match)

    e = sub.add_parser("eval-pve", help="run a PvE qualification stage")
    e.add_argument("--submission", required=True, help="policy spec, or submission id with --registry")
    e.add_argument("--stage", type=int, choices=(1, 2, 3), required=True)
    e.add_argument("--registry")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--matches", type=int, default=10)
    e.add_argument("--parallelism", type=int, default=1)
    e.add_argument("--replay-dir")
    _add_config(e)
    e.set_defaults(func=cmd_eval_pve)

    t = sub.add_parser("tournament", help="run (or resume) a PvP tournament")
    t.add_argument("--roster", help="file of '<id> <spec>' lines (in-memory tournament)")
    t.add_argument("--registry", help="use the registry's PvP-qualified submissions")
    t.add_argument("--target", type=int, default=100)
    t.add_argument("--parallelism", type=int, default=1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--reset", action="store_true", help="start everyone from the prior")
    t.add_argument("--stand-in", default="random")
    t.add_argument("--replay-dir")
    t.add_argument("--out", help="write the leaderboard here instead of stdout")
    t.add_argument("--json", action="store_true")
    _add_config(t)
    t.set_defaults(func=cmd_tournament)

    lb = sub.add_parser("leaderboard", help="print the registry leaderboard")
    lb.add_argument("--registry", required=True)
    lb.add_argument("--k", type=float, default=3.0)
    lb.add_argument("--json", action="store_true")
    lb.set_defaults(func=cmd_leaderboard)

    reg = sub.add_parser("register", help="add a submission to a registry (created if missing)")
    reg.add_argument("--registry", required=True)
    reg.add_argument("--spec", required=True)
    reg.add_argument("--name")
    reg.add_argument("--id")
    reg.add_argument("--pvp", action="store_true", help="mark PvP-qualified without playing PvE")
    reg.set_defaults(func=cmd_register)

    a = sub.add_parser("analyze", help="replay analytics tables")
    a.add_argument("kind", choices=("heatmap", "trajectory", "radar"))
    a.add_argument("--in", dest="inputs", nargs="+", required=True, help="replay files or directories")
    a.add_argument("--out")
    a.add_argument("--policy", help="entrant id or built-in spec (heatmap, radar)")
    a.add_argument("--team", help="team index or entrant id (trajectory)")
    a.set_defaults(func=cmd_analyze)

    rp = sub.add_parser("replay", help="replay file tools")
    rsub = rp.add_subparsers(dest="replay_command", required=True)
    v = rsub.add_parser("verify", help="check digest, seal and scorer equivalence")
    v.add_argument("file")
    v.set_defaults(func=cmd_replay_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except KeyboardInterrupt:
        print(json.dumps({"error": "Interrupted", "message": "interrupted"}), file=sys.stderr)
        return 130
    except Exception as e:  # noqa: BLE001 - every failure becomes one parseable line
        msg = str(e) if not isinstance(e, KeyError) else str(e.args[0]) if e.args else ""
        print(json.dumps({"error": type(e).__name__, "message": " ".join(msg.split())}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
