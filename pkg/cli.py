"""cev-price: command-line front end.

    cev-price [quote] --engine ncx2 --spot 100 --strike 110 --rate 0.05 --sigma 0.5 --alpha 1.9 --maturity 0.5
    cev-price sweep --config configs/table1.json --out table1.csv [--jobs N] [--reps 30] [--warmup 5]
    cev-price surface table1.csv --out surface.csv [--svg surface.svg] [--profiles profiles.svg]
    cev-price study [--format human|csv]

Exit codes: 0 success, 2 domain/config error, 3 numerical failure, 4 I/O error.
"""
import argparse
import json
import sys
from dataclasses import replace
from typing import List, Optional, Sequence

from bench import (CSV_HEADER, BenchmarkRecord, EngineResult, default_out_path, emit_alpha_profiles,
                   emit_error_surface, load_sweep_config, run_sweep, summarize, with_repetitions,
                   write_summary, write_sweep_csv)
from cev_semiclassical import (ActionForm, DiscountMode, ExponentMode, SemiclassicalConfig,
                               reproduction_study)
from engines import EngineSettings, price
from errors import DomainError, NumericalError
from market import Engine, PricingRequest
from settings import default_jobs
from telemetry import configure_telemetry, logger

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

COMMANDS = ('quote', 'sweep', 'surface', 'study')


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument('--exponent-mode', choices=[m.value for m in ExponentMode])
    p.add_argument('--discount-mode', choices=[m.value for m in DiscountMode])
    p.add_argument('--action-form', choices=[m.value for m in ActionForm])
    p.add_argument('--seed', type=int, help='Monte Carlo seed')
    p.add_argument('--paths', type=int, help='Monte Carlo paths')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='cev-price', description='CEV European call pricing engines')
    sub = parser.add_subparsers(dest='command')

    q = sub.add_parser('quote', help='price one contract')
    q.add_argument('--engine', default='ncx2', help='bs | semiclassical | ncx2 | mc')
    q.add_argument('--spot', type=float, required=True)
    q.add_argument('--strike', type=float, required=True)
    q.add_argument('--rate', type=float, required=True)
    q.add_argument('--sigma', type=float, required=True)
    q.add_argument('--alpha', type=float, help='required for every engine but bs (defaults to 2 there)')
    q.add_argument('--maturity', type=float, required=True)
    q.add_argument('--tau', type=float, help='time to expiry, defaults to the maturity')
    q.add_argument('--format', choices=('csv', 'human'), default='human')
    _add_model_flags(q)

    s = sub.add_parser('sweep', help='run a parameter sweep from a JSON config')
    s.add_argument('--config', required=True)
    s.add_argument('--out')
    s.add_argument('--reps', type=int)
    s.add_argument('--warmup', type=int)
    s.add_argument('--jobs', type=int)
    _add_model_flags(s)

    e = sub.add_parser('surface', help='turn a sweep CSV into a plot-ready error surface')
    e.add_argument('sweep_csv')
    e.add_argument('--out', required=True)
    e.add_argument('--svg', help='relative-error heatmap')
    e.add_argument('--profiles', help='price and run time against alpha (SVG)')

    st = sub.add_parser('study', help='match the semiclassical modes against the published six-month grid')
    st.add_argument('--format', choices=('csv', 'human'), default='human')
    return parser


def _normalize_argv(argv: Sequence[str]) -> List[str]:
    argv = list(argv)
    if argv and argv[0] in COMMANDS or any(a in ('-h', '--help') for a in argv[:1]):
        return argv
    return (['sweep'] if '--config' in argv else ['quote']) + argv


def _settings_from_args(args: argparse.Namespace) -> EngineSettings:
    settings = EngineSettings.from_env()
    semi = settings.semiclassical
    if getattr(args, 'exponent_mode', None):
        semi = replace(semi, exponent_mode=ExponentMode(args.exponent_mode))
    if getattr(args, 'discount_mode', None):
        semi = replace(semi, discount_mode=DiscountMode(args.discount_mode))
    if getattr(args, 'action_form', None):
        semi = replace(semi, action_form=ActionForm(args.action_form))
    mc = settings.mc
    if getattr(args, 'seed', None) is not None:
        mc = replace(mc, seed=args.seed)
    if getattr(args, 'paths', None) is not None:
        mc = replace(mc, paths=args.paths)
    return replace(settings, semiclassical=semi, mc=mc)


def run_quote(args: argparse.Namespace, out=sys.stdout) -> int:
    engine = Engine.parse(args.engine)
    alpha = args.alpha
    if alpha is None:
        if engine != Engine.BS:
            raise DomainError('alpha', f'required for the {engine.value} engine')
        alpha = 2.0
    req = PricingRequest.build(spot=args.spot, strike=args.strike, rate=args.rate, sigma=args.sigma,
                               alpha=alpha, maturity=args.maturity, tau=args.tau)
    quote = price(req, engine, _settings_from_args(args))
    if args.format == 'csv':
        record = BenchmarkRecord(sigma=args.sigma, alpha=alpha, maturity=args.maturity)
        record.results[engine] = EngineResult(price=quote.price, time_ns=quote.wall_time,
                                              diagnostics=quote.diagnostics)
        row = record.rows()[0]
        out.write(','.join(_csv_field(row[k]) for k in CSV_HEADER) + '\n')
    else:
        out.write(f'engine={engine.value} price={quote.price:.10g} time={quote.wall_time / 1e6:.3f} ms '
                  f'diagnostics={json.dumps(quote.diagnostics, sort_keys=True, default=str)}\n')
    return EXIT_OK


def _csv_field(value) -> str:
    text = str(value)
    if any(c in text for c in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def run_sweep_command(args: argparse.Namespace, out=sys.stdout) -> int:
    config = with_repetitions(load_sweep_config(args.config), args.reps, args.warmup)
    out_path = args.out or default_out_path(args.config)
    jobs = args.jobs if args.jobs is not None else default_jobs()

    def progress(i: int, record: BenchmarkRecord) -> None:
        logger.info("cell %d done: sigma=%s alpha=%s T=%s", i, record.sigma, record.alpha, record.maturity)

    records = run_sweep(config, _settings_from_args(args), jobs=jobs, on_cell=progress)
    write_sweep_csv(records, out_path)
    summary = summarize(records)
    summary_file = write_summary(summary, out_path)
    out.write(json.dumps(summary, indent=2, sort_keys=True) + '\n')
    out.write(f'wrote {out_path} and {summary_file}\n')
    if records and all(r.failed for r in records):
        return EXIT_NUMERICAL
    return EXIT_OK


def run_surface(args: argparse.Namespace, out=sys.stdout) -> int:
    rows = emit_error_surface(args.sweep_csv, args.out, svg=args.svg)
    out.write(f'wrote {rows} rows to {args.out}\n')
    if args.profiles:
        lines = emit_alpha_profiles(args.sweep_csv, args.profiles)
        out.write(f'wrote {lines} alpha profiles to {args.profiles}\n')
    return EXIT_OK


def run_study(args: argparse.Namespace, out=sys.stdout) -> int:
    report = reproduction_study(base=SemiclassicalConfig.from_env())
    if args.format == 'csv':
        out.write('exponent_mode,discount_mode,action_form,max_rel_dev\n')
        for row in report.rows:
            out.write(f'{row.exponent_mode.value},{row.discount_mode.value},{row.action_form.value},'
                      f'{row.max_rel_dev!r}\n')
    else:
        for row in sorted(report.rows, key=lambda r: r.max_rel_dev):
            out.write(f'{row.exponent_mode.value:>10} {row.discount_mode.value:>10} {row.action_form.value:>10} '
                      f'max rel dev {row.max_rel_dev:.4%}\n')
        best = report.best
        out.write(f'best: {best.exponent_mode.value}/{best.discount_mode.value}/{best.action_form.value}\n')
    return EXIT_OK


HANDLERS = {'quote': run_quote, 'sweep': run_sweep_command, 'surface': run_surface, 'study': run_study}


def main(argv: Optional[Sequence[str]] = None, out=sys.stdout, err=sys.stderr) -> int:
    configure_telemetry()
    args = build_parser().parse_args(_normalize_argv(sys.argv[1:] if argv is None else argv))
    try:
        return HANDLERS[args.command](args, out)
    except DomainError as e:
        err.write(f'{type(e).__name__}: {e}\n')
        return EXIT_DOMAIN
    except NumericalError as e:
        err.write(f'{type(e).__name__}: {e}\n')
        return EXIT_NUMERICAL
    except OSError as e:
        err.write(f'{type(e).__name__}: {e}\n')
        return EXIT_IO


if __name__ == '__main__':
    sys.exit(main())
