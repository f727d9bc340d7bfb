"""TW squeezing in the elongated 2pi x (500, 500, 100) rad/s trap on a Cartesian box."""
from _common import config_from, parser, run

args = parser(__doc__, "cylindrical-3d").parse_args()
s = run(config_from(args), args).summary
print(f"T_pi = {s['T_pi_s'] * 1e3:.2f} ms  v_min = {s['v_min']:.3f}  xi_min = {s['xi_min']:.3f}")
