"""Repeated pi pulses at fixed T_pi: lambda should grow roughly in proportion to the bounce count.

Runs the phase-diffusion estimator for each bounce count and, with --tw, the
full TW readout of the last one (expected v near 0.05 at four bounces).
"""
from _common import config_from, parser, run

ap = parser(__doc__, "multibounce-1d")
ap.add_argument("--bounces", type=int, nargs="+", default=[1, 2, 4])
ap.add_argument("--tw", action="store_true")
args = ap.parse_args()
cfg = config_from(args)
cfg.mode = "sweep"
cfg.sweep.parameter, cfg.sweep.values, cfg.sweep.mode = "n_bounces", args.bounces, "lambda-est"
rows = run(cfg, args).summary["rows"]
base = rows[0]["lambda_rphi"]
for r in rows:
    lam = r["lambda_rphi"]
    print(f"bounces={int(r['value'])}  lambda_rphi={lam}  ratio={lam / base if lam and base else None}")
if args.tw:
    cfg.mode = "tw"
    cfg.sequence.n_bounces = args.bounces[-1]
    s = run(cfg, args).summary
    print(f"TW: v_min = {s['v_min']:.3f}  xi_min = {s['xi_min']:.3f}")
