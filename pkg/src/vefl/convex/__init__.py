from .gradcheck import check_gradient
from .logprog import LogProgram, LogProgramResult, kkt_residual, solve_log_program
from .lp import LinearProgram, LPResult, solve_lp
from .smooth import (SmoothConvexProgram, SmoothResult, project_box, project_box_budget,
                     project_dykstra, project_halfspace, solve_smooth)
