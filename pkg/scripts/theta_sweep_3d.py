"""Truncated-Wigner readout-angle sweep of v and xi_s on the 32^3 configuration.

Expected: a dip slightly below 0.2 near theta = 0.1 pi after 1000 trajectories.
One ensemble serves every theta.  Hours on a workstation; try
``--preset large-1d`` or ``--trajectories 100`` first.
"""
from _common import config_from, parser, run

args = parser(__doc__, "paper-3d").parse_args()
cfg = config_from(args)
cfg.mode = "tw"
s = run(cfg, args).summary
print(f"T_pi = {s['T_pi_s'] * 1e3:.2f} ms  v_min = {s['v_min']:.3f}  theta_opt = {s['theta_opt']:.3f} rad  "
      f"xi_min = {s['xi_min']:.3f}")
