from koranyi.cli.commands.eval_kernel import eval_kernel_command
from koranyi.cli.commands.fit_coeffs import fit_coeffs_command
from koranyi.cli.commands.init import init_command
from koranyi.cli.commands.solve import solve_command
from koranyi.cli.commands.verify import verify_command

__all__ = [
    "eval_kernel_command",
    "fit_coeffs_command",
    "init_command",
    "solve_command",
    "verify_command",
]
