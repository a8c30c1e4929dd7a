"""Writes the code-generation templates under data/templates."""
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent / "data" / "templates"


def write(rel, text):
    path = ROOT / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text.lstrip("\n"))


# ---------------------------------------------------------------- Fortran 90

F_HEAD = """
{{description_comment}}
!
! The generated data has the exact solution X = 1: the right-hand side is the
! row sum of the matrix. Replace init_data to solve your own system.
module {{routine_lower}}_data
  implicit none
  integer, parameter :: wp = {{kind_expr}}
{{#params}}
{{doc}}
  {{decl}}
{{/params}}
end module {{routine_lower}}_data

program {{routine_lower}}_driver
  use {{routine_lower}}_data
  implicit none

  call init_data()
  call solve()
  call check_result()

contains

  ! Entry (i, j) of the test matrix.
  function aval(i, j) result(v)
    integer, intent(in) :: i, j
    real(wp) :: v
    v = 0.0_wp
    if (.not. ({{pattern}})) return
    if (i == j) then
      v = real(N + 4, wp)
    else
      v = {{offdiag}}
    end if
  end function aval

  subroutine init_data()
    integer :: i, j
{{#scalars}}
    {{name}} = {{value}}
{{/scalars}}
{{#arrays}}
    allocate({{name}}({{extent}}))
{{/arrays}}
{{fill_matrix}}
{{fill_rhs}}
  end subroutine init_data

  subroutine solve()
    call {{routine_name}}({{call_args}})
    if (INFO /= 0) then
      print '(a, i0)', ' {{routine_name}} failed with INFO = ', INFO
      stop 1
    end if
  end subroutine solve
"""

F_CHECK = """
  subroutine check_result()
    real(wp) :: err
{{report_call}}
    err = maxval(abs({{solution}}(1:N, 1:NRHS) - 1.0_wp))
    print '(a, es10.3)', ' max error in the solution: ', err
    if (err > {{check_tol}}) then
      print *, 'FAILED'
      stop 1
    end if
    print *, 'PASSED'
  end subroutine check_result
"""

F_TAIL = """
end program {{routine_lower}}_driver
"""

F_EXPERT = """
  subroutine report()
    print '(a, es10.3)', ' reciprocal condition number: ', RCOND
    print '(a, 2es10.3)', ' forward and backward error bounds: ', FERR(1), BERR(1)
  end subroutine report
"""

F_EQUILIBRATED = """
  subroutine report()
    ! With FACT = 'E' the routine computes scale factors and equilibrates only a
    ! badly scaled matrix: rows when the smallest row factor is below 0.1 times the
    ! largest, columns likewise, and rows when the largest entry is near overflow
    ! or underflow. EQUED reports what was applied.
    print '(a, es10.3)', ' reciprocal condition number: ', RCOND
    print '(a, 2es10.3)', ' forward and backward error bounds: ', FERR(1), BERR(1)
    select case (EQUED)
    case ('N')
      print *, 'no equilibration'
    case ('R')
      print *, 'row equilibration: diag(R) * A'
    case ('C')
      print *, 'column equilibration: A * diag(C)'
    case ('B')
      print *, 'row and column equilibration: diag(R) * A * diag(C)'
    case ('Y')
      print *, 'symmetric equilibration: diag(S) * A * diag(S)'
    case default
      print *, 'unexpected EQUED = ', EQUED
    end select
  end subroutine report
"""


def fortran(report):
    call = "    call report()\n" if report else ""
    check = F_CHECK.replace("{{report_call}}\n", call)
    return F_HEAD + check + report + F_TAIL


for cat, report in [("driver", ""), ("triangular_solve", ""), ("expert_driver", F_EXPERT),
                    ("expert_equilibrated", F_EQUILIBRATED)]:
    write(f"lapack/fortran90/{cat}.f90.tmpl", fortran(report))

F_FILL = {
    "full": """
    do j = 1, N
      do i = 1, N
        A(i, j) = aval(i, j)
      end do
    end do
""",
    "band_general": """
    AB = 0.0_wp
    do j = 1, N
      do i = max(1, j - KU), min(N, j + KL)
        AB(LDAB - KL + i - j, j) = aval(i, j)
      end do
    end do
""",
    "band_upper": """
    AB = 0.0_wp
    do j = 1, N
      do i = max(1, j - KD), j
        AB(KD + 1 + i - j, j) = aval(i, j)
      end do
    end do
""",
    "packed_upper": """
    do j = 1, N
      do i = 1, j
        AP(i + (j - 1) * j / 2) = aval(i, j)
      end do
    end do
""",
    "tridiag_general": """
    do i = 1, N
      D(i) = aval(i, i)
    end do
    do i = 1, N - 1
      DL(i) = aval(i + 1, i)
      DU(i) = aval(i, i + 1)
    end do
""",
    "tridiag_pd": """
    do i = 1, N
      D(i) = aval(i, i)
    end do
    do i = 1, N - 1
      E(i) = aval(i, i + 1)
    end do
""",
    "rhs": """
    do i = 1, N
      B(i, 1:NRHS) = sum([(aval(i, j), j = 1, N)])
    end do
""",
}
for name, text in F_FILL.items():
    write(f"lapack/fortran90/fill/{name}.f90.tmpl", text)

write("lapack/fortran90/makefile.tmpl", """
# Builds {{program}} against the reference LAPACK and BLAS.
# Override on the command line, e.g. make FC=ifort LIBS=-lmkl_rt
FC = gfortran
FFLAGS = -O2
LIBS = -llapack -lblas

{{program}}: {{source}}
\t$(FC) $(FFLAGS) -o $@ {{source}} $(LIBS)

run: {{program}}
\t./{{program}}

clean:
\trm -f {{program}} *.o *.mod

.PHONY: run clean
""")

# ---------------------------------------------------------------------- C

C_HEAD = """
{{description_comment}}
//
// The generated data has the exact solution X = 1: the right-hand side is the
// row sum of the matrix. Replace init_data to solve your own system. Arrays are
// column-major with 1-based (i, j) mapped to [(j - 1) * ld + (i - 1)].
#include <complex.h>
#include <math.h>
#include <stddef.h>
#include <stdio.h>
#include <stdlib.h>

extern void {{routine_lower}}_({{prototype}});

{{#params}}
{{doc}}
{{decl}}
{{/params}}

// Entry (i, j) of the test matrix.
static double aval(int i, int j) {
  if (!({{pattern}})) return 0.0;
  if (i == j) return N + 4.0;
  return {{offdiag}};
}

static void init_data(void) {
  int i, j, k;
{{#scalars}}
  {{name}} = {{value}};
{{/scalars}}
{{#arrays}}
  {{name}} = calloc((size_t)({{extent}}), sizeof *{{name}});
{{/arrays}}
{{fill_matrix}}
{{fill_rhs}}
}

static void solve(void) {
  {{routine_lower}}_({{call_args}});
  if (INFO != 0) {
    printf("{{routine_name}} failed with INFO = %d\\n", INFO);
    exit(1);
  }
}
"""

C_CHECK = """
static void check_result(void) {
  double err = 0.0;
  int i, j;
{{report_call}}
  for (j = 1; j <= NRHS; ++j)
    for (i = 1; i <= N; ++i) {
      double e = {{abs_fn}}({{solution}}[(j - 1) * {{solution_ld}} + (i - 1)] - 1.0);
      if (e > err) err = e;
    }
  printf(" max error in the solution: %10.3e\\n", err);
  if (err > {{check_tol}}) {
    printf(" FAILED\\n");
    exit(1);
  }
  printf(" PASSED\\n");
}

int main(void) {
  init_data();
  solve();
  check_result();
  return 0;
}
"""

C_EXPERT = """
static void report(void) {
  printf(" reciprocal condition number: %10.3e\\n", (double)RCOND);
  printf(" forward and backward error bounds: %10.3e %10.3e\\n", (double)FERR[0], (double)BERR[0]);
}
"""

C_EQUILIBRATED = """
// With FACT = 'E' the routine computes scale factors and equilibrates only a
// badly scaled matrix: rows when the smallest row factor is below 0.1 times the
// largest, columns likewise, and rows when the largest entry is near overflow
// or underflow. EQUED reports what was applied.
static void report(void) {
  printf(" reciprocal condition number: %10.3e\\n", (double)RCOND);
  printf(" forward and backward error bounds: %10.3e %10.3e\\n", (double)FERR[0], (double)BERR[0]);
  switch (EQUED) {
    case 'N': printf(" no equilibration\\n"); break;
    case 'R': printf(" row equilibration: diag(R) * A\\n"); break;
    case 'C': printf(" column equilibration: A * diag(C)\\n"); break;
    case 'B': printf(" row and column equilibration: diag(R) * A * diag(C)\\n"); break;
    case 'Y': printf(" symmetric equilibration: diag(S) * A * diag(S)\\n"); break;
    default: printf(" unexpected EQUED = %c\\n", EQUED); break;
  }
}
"""


def c(report):
    call = "  report();\n" if report else ""
    check = C_CHECK.replace("{{report_call}}\n", call)
    return C_HEAD + (report if report else "") + check


for cat, report in [("driver", ""), ("triangular_solve", ""), ("expert_driver", C_EXPERT),
                    ("expert_equilibrated", C_EQUILIBRATED)]:
    write(f"lapack/c/{cat}.c.tmpl", c(report))

C_FILL = {
    "full": """
  for (j = 1; j <= N; ++j)
    for (i = 1; i <= N; ++i) A[(j - 1) * LDA + (i - 1)] = aval(i, j);
""",
    "band_general": """
  for (j = 1; j <= N; ++j)
    for (i = j - KU > 1 ? j - KU : 1; i <= (j + KL < N ? j + KL : N); ++i)
      AB[(j - 1) * LDAB + (LDAB - KL + i - j - 1)] = aval(i, j);
""",
    "band_upper": """
  for (j = 1; j <= N; ++j)
    for (i = j - KD > 1 ? j - KD : 1; i <= j; ++i) AB[(j - 1) * LDAB + (KD + i - j)] = aval(i, j);
""",
    "packed_upper": """
  for (j = 1; j <= N; ++j)
    for (i = 1; i <= j; ++i) AP[i - 1 + (j - 1) * j / 2] = aval(i, j);
""",
    "tridiag_general": """
  for (i = 1; i <= N; ++i) D[i - 1] = aval(i, i);
  for (i = 1; i < N; ++i) {
    DL[i - 1] = aval(i + 1, i);
    DU[i - 1] = aval(i, i + 1);
  }
""",
    "tridiag_pd": """
  for (i = 1; i <= N; ++i) D[i - 1] = aval(i, i);
  for (i = 1; i < N; ++i) E[i - 1] = aval(i, i + 1);
""",
    "rhs": """
  for (i = 1; i <= N; ++i) {
    double s = 0.0;
    for (j = 1; j <= N; ++j) s += aval(i, j);
    for (k = 1; k <= NRHS; ++k) B[(k - 1) * LDB + (i - 1)] = s;
  }
""",
}
for name, text in C_FILL.items():
    write(f"lapack/c/fill/{name}.c.tmpl", text)

write("lapack/c/makefile.tmpl", """
# Builds {{program}} against the reference LAPACK and BLAS.
# Override on the command line, e.g. make CC=clang LIBS=-lopenblas
CC = cc
CFLAGS = -O2
LIBS = -llapack -lblas -lm

{{program}}: {{source}}
\t$(CC) $(CFLAGS) -o $@ {{source}} $(LIBS)

run: {{program}}
\t./{{program}}

clean:
\trm -f {{program}} *.o

.PHONY: run clean
""")

write("lapack/README.tmpl", """
{{routine_name}} driver ({{language}})

{{description}}

The program sets up a test system whose exact solution is all ones, calls
{{routine_name}}, and prints PASSED when the computed solution matches.

Files:
{{#files}}
  {{padded_path}}  {{what}}
{{/files}}

Build and run:
  make
  ./{{program}}

Set FC/CC and LIBS on the make command line to use another compiler or an
optimized LAPACK.
""")

# ------------------------------------------------------------ PETSc / SLEPc

write("petsc/solver.c.tmpl", """
/*
{{summary_comment}}
 *
 * The matrix is read from the PETSc binary file named by -f. The right-hand
 * side is A times a vector of ones, so the exact solution is known. Runtime
 * options are read from {{options_file}}; command-line flags override them.
 */
#include <petscksp.h>

int main(int argc, char **argv)
{
  Mat                A;
  Vec                x, b, ones;
  KSP                ksp;
  PetscViewer        viewer;
  char               file[PETSC_MAX_PATH_LEN];
  PetscBool          found;
  PetscInt           its;
  PetscReal          error;
  KSPConvergedReason reason;

  PetscCall(PetscInitialize(&argc, &argv, "{{options_file}}", NULL));
  PetscCall(PetscOptionsGetString(NULL, NULL, "-f", file, sizeof(file), &found));
  PetscCheck(found, PETSC_COMM_WORLD, PETSC_ERR_USER, "Name the matrix file with -f");

  PetscCall(PetscViewerBinaryOpen(PETSC_COMM_WORLD, file, FILE_MODE_READ, &viewer));
  PetscCall(MatCreate(PETSC_COMM_WORLD, &A));
  PetscCall(MatSetFromOptions(A));
  PetscCall(MatLoad(A, viewer));
  PetscCall(PetscViewerDestroy(&viewer));

  PetscCall(MatCreateVecs(A, &x, &b));
  PetscCall(VecDuplicate(x, &ones));
  PetscCall(VecSet(ones, 1.0));
  PetscCall(MatMult(A, ones, b));

  PetscCall(KSPCreate(PETSC_COMM_WORLD, &ksp));
  PetscCall(KSPSetOperators(ksp, A, A));
  PetscCall(KSPSetFromOptions(ksp));
  PetscCall(KSPSolve(ksp, b, x));

  PetscCall(KSPGetConvergedReason(ksp, &reason));
  PetscCall(KSPGetIterationNumber(ksp, &its));
  PetscCall(VecAXPY(x, -1.0, ones));
  PetscCall(VecNorm(x, NORM_2, &error));
  PetscCall(PetscPrintf(PETSC_COMM_WORLD, "reason %s, iterations %" PetscInt_FMT ", error norm %g\\n",
                        KSPConvergedReasons[reason], its, (double)error));

  PetscCall(KSPDestroy(&ksp));
  PetscCall(VecDestroy(&ones));
  PetscCall(VecDestroy(&b));
  PetscCall(VecDestroy(&x));
  PetscCall(MatDestroy(&A));
  PetscCall(PetscFinalize());
  return 0;
}
""")

write("petsc/properties.c.tmpl", """
/*
{{summary_comment}}
 *
 * The matrix is read from the PETSc binary file named by -f. Runtime options
 * are read from {{options_file}}; command-line flags override them.
 */
#include <petscmat.h>

int main(int argc, char **argv)
{
  Mat         A;
  Vec         diag;
  PetscViewer viewer;
  char        file[PETSC_MAX_PATH_LEN];
  PetscBool   found, symmetric;
  PetscInt    m, n;
  MatInfo     info;
  PetscReal   norm1, normf, norminf, absdiag;
  PetscScalar trace;

  PetscCall(PetscInitialize(&argc, &argv, "{{options_file}}", NULL));
  PetscCall(PetscOptionsGetString(NULL, NULL, "-f", file, sizeof(file), &found));
  PetscCheck(found, PETSC_COMM_WORLD, PETSC_ERR_USER, "Name the matrix file with -f");

  PetscCall(PetscViewerBinaryOpen(PETSC_COMM_WORLD, file, FILE_MODE_READ, &viewer));
  PetscCall(MatCreate(PETSC_COMM_WORLD, &A));
  PetscCall(MatSetFromOptions(A));
  PetscCall(MatLoad(A, viewer));
  PetscCall(PetscViewerDestroy(&viewer));

  PetscCall(MatGetSize(A, &m, &n));
  PetscCall(MatGetInfo(A, MAT_GLOBAL_SUM, &info));
  PetscCall(MatNorm(A, NORM_1, &norm1));
  PetscCall(MatNorm(A, NORM_FROBENIUS, &normf));
  PetscCall(MatNorm(A, NORM_INFINITY, &norminf));
  PetscCall(MatCreateVecs(A, NULL, &diag));
  PetscCall(MatGetDiagonal(A, diag));
  PetscCall(VecSum(diag, &trace));
  PetscCall(VecNorm(diag, NORM_1, &absdiag));
  PetscCall(MatIsSymmetric(A, 0.0, &symmetric));

  PetscCall(PetscPrintf(PETSC_COMM_WORLD, "rows: %" PetscInt_FMT "\\n", m));
  PetscCall(PetscPrintf(PETSC_COMM_WORLD, "columns: %" PetscInt_FMT "\\n", n));
  PetscCall(PetscPrintf(PETSC_COMM_WORLD, "nonzeros: %.0f\\n", (double)info.nz_used));
  PetscCall(PetscPrintf(PETSC_COMM_WORLD, "norm_1: %g\\n", (double)norm1));
  PetscCall(PetscPrintf(PETSC_COMM_WORLD, "frobenius_norm: %g\\n", (double)normf));
  PetscCall(PetscPrintf(PETSC_COMM_WORLD, "infinity_norm: %g\\n", (double)norminf));
  PetscCall(PetscPrintf(PETSC_COMM_WORLD, "trace: %g\\n", (double)PetscRealPart(trace)));
  PetscCall(PetscPrintf(PETSC_COMM_WORLD, "absolute_trace: %g\\n", (double)absdiag));
  PetscCall(PetscPrintf(PETSC_COMM_WORLD, "symmetric: %s\\n", symmetric ? "yes" : "no"));

  PetscCall(VecDestroy(&diag));
  PetscCall(MatDestroy(&A));
  PetscCall(PetscFinalize());
  return 0;
}
""")

write("slepc/eigensolver.c.tmpl", """
/*
{{summary_comment}}
 *
 * The matrix is read from the PETSc binary file named by -f. Runtime options
 * are read from {{options_file}}; command-line flags override them.
 */
#include <slepceps.h>

int main(int argc, char **argv)
{
  Mat               A;
  EPS               eps;
  PetscViewer       viewer;
  char              file[PETSC_MAX_PATH_LEN];
  PetscBool         found;
  PetscInt          i, nconv;
  PetscScalar       kr, ki;
  PetscReal         error;
  EPSConvergedReason reason;

  PetscCall(SlepcInitialize(&argc, &argv, "{{options_file}}", NULL));
  PetscCall(PetscOptionsGetString(NULL, NULL, "-f", file, sizeof(file), &found));
  PetscCheck(found, PETSC_COMM_WORLD, PETSC_ERR_USER, "Name the matrix file with -f");

  PetscCall(PetscViewerBinaryOpen(PETSC_COMM_WORLD, file, FILE_MODE_READ, &viewer));
  PetscCall(MatCreate(PETSC_COMM_WORLD, &A));
  PetscCall(MatSetFromOptions(A));
  PetscCall(MatLoad(A, viewer));
  PetscCall(PetscViewerDestroy(&viewer));

  PetscCall(EPSCreate(PETSC_COMM_WORLD, &eps));
  PetscCall(EPSSetOperators(eps, A, NULL));
  PetscCall(EPSSetFromOptions(eps));
  PetscCall(EPSSolve(eps));

  PetscCall(EPSGetConvergedReason(eps, &reason));
  PetscCall(EPSGetConverged(eps, &nconv));
  PetscCall(PetscPrintf(PETSC_COMM_WORLD, "reason %s, converged eigenpairs %" PetscInt_FMT "\\n",
                        EPSConvergedReasons[reason], nconv));
  for (i = 0; i < nconv; i++) {
    PetscCall(EPSGetEigenpair(eps, i, &kr, &ki, NULL, NULL));
    PetscCall(EPSComputeError(eps, i, EPS_ERROR_RELATIVE, &error));
    PetscCall(PetscPrintf(PETSC_COMM_WORLD, "%12g %12g  relative error %g\\n", (double)PetscRealPart(kr),
                          (double)PetscImaginaryPart(kr) + (double)PetscRealPart(ki), (double)error));
  }

  PetscCall(EPSDestroy(&eps));
  PetscCall(MatDestroy(&A));
  PetscCall(SlepcFinalize());
  return 0;
}
""")

write("petsc/makefile.tmpl", """
# Builds {{program}} with the PETSc makefile rules; needs PETSC_DIR (and
# PETSC_ARCH for a non-prefix install) in the environment.
include ${PETSC_DIR}/lib/petsc/conf/variables
include ${PETSC_DIR}/lib/petsc/conf/rules

{{program}}: {{program}}.o
\t-${CLINKER} -o {{program}} {{program}}.o ${PETSC_LIB}
\t${RM} {{program}}.o

run: {{program}}
\t{{run_prefix}}./{{program}}

.PHONY: run
""")

write("slepc/makefile.tmpl", """
# Builds {{program}} with the SLEPc makefile rules; needs SLEPC_DIR and
# PETSC_DIR (and PETSC_ARCH for a non-prefix install) in the environment.
include ${SLEPC_DIR}/lib/slepc/conf/slepc_common

{{program}}: {{program}}.o
\t-${CLINKER} -o {{program}} {{program}}.o ${SLEPC_EPS_LIB}
\t${RM} {{program}}.o

run: {{program}}
\t{{run_prefix}}./{{program}}

.PHONY: run
""")

write("petsc/options.txt.tmpl", """
{{#options}}
{{option}}
{{/options}}
""")

write("petsc/README.tmpl", """
{{program}} ({{library}})

{{summary}}

Files:
{{#files}}
  {{padded_path}}  {{what}}
{{/files}}

Build and run on {{processes}}:
  make {{program}}
  make run

The program reads matrix.dat, a matrix in PETSc binary format. Convert a
Matrix Market file with PETSc's own tools, or pass another file with
-f path/to/matrix. Options in options.txt are read at start-up; flags given
on the command line take precedence.
""")
