"""Trap-frequency scan: T_pi, lambda, Q, v_min and xi_s per omega, plus the two-mode v_min.

Uses the spherical TW sweep preset.  Pass --set sweep.values=[...] to choose
frequencies (rad/s).
"""
from _common import config_from, parser, run

args = parser(__doc__, "omega-sweep-1d").parse_args()
m = run(config_from(args), args)
print((__import__("pathlib").Path(m.run_dir) / "sweep.csv").read_text())
