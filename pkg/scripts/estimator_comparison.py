"""Compare the overlap-integral and phase-diffusion lambda estimates on one configuration."""
from _common import config_from, parser, run

ap = parser(__doc__, "ci-small")
args = ap.parse_args()
cfg = config_from(args)
cfg.mode = "lambda-est"
s = run(cfg, args).summary
for k in ("T_pi_s", "lambda_rchi", "lambda_rphi", "ratio_chi_over_phi", "lambda_opt",
          "v_min_twomode_lambda_rphi", "theta_opt_twomode_lambda_rphi", "regime_lambda_rphi"):
    print(f"{k:32s} {s[k]}")
