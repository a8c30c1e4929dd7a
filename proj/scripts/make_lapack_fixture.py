#!/usr/bin/env python3
"""Generate the LAPACK linear-solver taxonomy documents under data/taxonomy/.

The guided-search tree is derived from the routine facets: at every node the
next facet (in FACET_ORDER) that still splits the remaining routines becomes a
question, and facets that no longer discriminate are skipped.

    python3 scripts/make_lapack_fixture.py            # writes both documents
"""
import json
import pathlib

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "data" / "taxonomy"

FACET_ORDER = ["problem_class", "form", "scalar_field", "matrix_type", "storage", "precision"]

QUESTION_TEXT = {
    "problem_class": "Which of the following functions do you wish to execute?",
    "form": "What form of the linear system do you want to solve?",
    "scalar_field": "Are there complex numbers in your matrix?",
    "matrix_type": "What is the type of your matrix?",
    "storage": "How is your matrix stored?",
    "precision": "Would you like to use single or double precision?",
}

OPTIONS = {
    "problem_class": [
        ("linear_solve", "Solve a system of linear equations only"),
        ("linear_solve_expert",
         "Solve a system of linear equations and estimate the condition number and error bounds"),
    ],
    "form": [("ax_b", "AX = B"), ("atx_b", "A^T X = B"), ("ahx_b", "A^H X = B")],
    "scalar_field": [("real", "No"), ("complex", "Yes")],
    "matrix_type": [
        ("general", "general"),
        ("symmetric", "symmetric"),
        ("hermitian", "Hermitian"),
        ("spd", "symmetric positive definite"),
        ("hpd", "Hermitian positive definite"),
        ("triangular", "triangular"),
    ],
    "storage": [("full", "full"), ("band", "band"), ("packed", "packed"),
                ("tridiagonal", "tridiagonal")],
    "precision": [("single", "single"), ("double", "double")],
}

TYPE_WORDS = {
    "general": "general",
    "symmetric": "symmetric indefinite",
    "hermitian": "Hermitian indefinite",
    "spd": "symmetric positive definite",
    "hpd": "Hermitian positive definite",
    "triangular": "triangular",
}
STORAGE_WORDS = {
    "full": "stored in full (conventional) storage",
    "band": "stored in band storage",
    "packed": "stored in packed storage",
    "tridiagonal": "stored as its three diagonals (tridiagonal storage)",
}

# --- parameter helpers -------------------------------------------------------

def p(name, kind, intent, desc, element="", dims=None, value=""):
    d = {"name": name, "kind": kind, "intent": intent, "description": desc}
    if element:
        d["element"] = element
    if dims:
        d["dims"] = dims
    if value:
        d["value"] = value
    return d


def n():
    return p("N", "integer", "in", "The order of the matrix A (number of linear equations).",
             value="8")


def nrhs():
    return p("NRHS", "integer", "in", "The number of right hand sides (columns of B).", value="1")


def info():
    return p("INFO", "integer", "out",
             "= 0: successful exit; < 0: the i-th argument had an illegal value; "
             "> 0: the factorization or solve failed at step i.")


def uplo():
    return p("UPLO", "character", "in", "'U': upper triangle of A is stored; 'L': lower triangle.",
             element="character", value="'U'")


def full_a(intent="inout"):
    return [p("A", "array_2d", intent,
              "On entry, the N-by-N coefficient matrix A. On exit, the factors of A.",
              element="scalar", dims=["LDA", "N"]),
            p("LDA", "integer", "in", "The leading dimension of A, LDA >= max(1,N).", value="N")]


def packed_ap(intent="inout"):
    return p("AP", "array_1d", intent,
             "The triangle of A packed columnwise in a linear array of length N*(N+1)/2.",
             element="scalar", dims=["N*(N+1)/2"])


def rhs_b(intent="inout"):
    return [p("B", "array_2d", intent,
              "On entry, the N-by-NRHS right hand side matrix B; on exit, the solution X.",
              element="scalar", dims=["LDB", "NRHS"]),
            p("LDB", "integer", "in", "The leading dimension of B, LDB >= max(1,N).", value="N")]


def ipiv():
    return p("IPIV", "array_1d", "out", "The pivot indices of the factorization; row i was "
             "interchanged with row IPIV(i).", element="integer", dims=["N"])


def expert_tail(field, rwork_len, work_len, with_iwork=True):
    out = [
        p("X", "array_2d", "out", "The N-by-NRHS solution matrix X.", element="scalar",
          dims=["LDX", "NRHS"]),
        p("LDX", "integer", "in", "The leading dimension of X, LDX >= max(1,N).", value="N"),
        p("RCOND", "real_scalar", "out",
          "Estimate of the reciprocal condition number of A after equilibration."),
        p("FERR", "array_1d", "out", "Forward error bound for each solution vector.",
          element="real", dims=["NRHS"]),
        p("BERR", "array_1d", "out", "Componentwise relative backward error of each solution vector.",
          element="real", dims=["NRHS"]),
        p("WORK", "array_1d", "out", "Workspace.", element="scalar", dims=[work_len]),
    ]
    if with_iwork:
        if field == "real":
            out.append(p("IWORK", "array_1d", "out", "Integer workspace.", element="integer",
                         dims=["N"]))
        else:
            out.append(p("RWORK", "array_1d", "out", "Real workspace.", element="real",
                         dims=[rwork_len]))
    out.append(info())
    return out


def fact(value):
    return p("FACT", "character", "in",
             "'F': factored form supplied; 'N': factor A; 'E': equilibrate if necessary, then factor.",
             element="character", value=value)


def trans():
    return p("TRANS", "character", "in", "'N': A*X = B; 'T': A**T*X = B; 'C': A**H*X = B.",
             element="character", value="'N'")


def equed():
    return p("EQUED", "character", "inout",
             "Form of equilibration done: 'N' none, 'R' row, 'C' column, 'B' both (or 'Y').",
             element="character")


# --- families ---------------------------------------------------------------

def ge(field):
    return [n(), nrhs(), *full_a(), ipiv(), *rhs_b(), info()]


def gb(field):
    return [n(),
            p("KL", "integer", "in", "The number of subdiagonals within the band of A.", value="2"),
            p("KU", "integer", "in", "The number of superdiagonals within the band of A.", value="1"),
            nrhs(),
            p("AB", "array_2d", "inout",
              "The band matrix A in rows KL+1 to 2*KL+KU+1; rows 1 to KL need not be set. "
              "On exit, details of the LU factorization.", element="scalar", dims=["LDAB", "N"]),
            p("LDAB", "integer", "in", "The leading dimension of AB, LDAB >= 2*KL+KU+1.",
              value="2*KL+KU+1"),
            ipiv(), *rhs_b(), info()]


def gt(field):
    return [n(), nrhs(),
            p("DL", "array_1d", "inout", "The (n-1) sub-diagonal elements of A.", element="scalar",
              dims=["N-1"]),
            p("D", "array_1d", "inout", "The diagonal elements of A.", element="scalar", dims=["N"]),
            p("DU", "array_1d", "inout", "The (n-1) super-diagonal elements of A.", element="scalar",
              dims=["N-1"]),
            *rhs_b(), info()]


def po(field):
    return [uplo(), n(), nrhs(), *full_a(), *rhs_b(), info()]


def pp(field):
    return [uplo(), n(), nrhs(), packed_ap(), *rhs_b(), info()]


def pb(field):
    return [uplo(), n(),
            p("KD", "integer", "in", "The number of super- or sub-diagonals of A.", value="2"),
            nrhs(),
            p("AB", "array_2d", "inout", "The band matrix A, upper or lower triangle, in the first "
              "KD+1 rows.", element="scalar", dims=["LDAB", "N"]),
            p("LDAB", "integer", "in", "The leading dimension of AB, LDAB >= KD+1.", value="KD+1"),
            *rhs_b(), info()]


def pt(field):
    return [n(), nrhs(),
            p("D", "array_1d", "inout", "The n diagonal elements of A.", element="real", dims=["N"]),
            p("E", "array_1d", "inout", "The (n-1) subdiagonal elements of A.", element="scalar",
              dims=["N-1"]),
            *rhs_b(), info()]


def sy(field):
    return [uplo(), n(), nrhs(), *full_a(), ipiv(), *rhs_b(),
            p("WORK", "array_1d", "out", "Workspace.", element="scalar", dims=["LWORK"]),
            p("LWORK", "integer", "in", "The length of WORK.", value="64*N"),
            info()]


def sp(field):
    return [uplo(), n(), nrhs(), packed_ap(), ipiv(), *rhs_b(), info()]


def tr(field):
    return [uplo(), trans(),
            p("DIAG", "character", "in", "'N': A is non-unit triangular; 'U': unit triangular.",
              element="character", value="'N'"),
            n(), nrhs(), *full_a("in"), *rhs_b(), info()]


def tp(field):
    return [uplo(), trans(),
            p("DIAG", "character", "in", "'N': A is non-unit triangular; 'U': unit triangular.",
              element="character", value="'N'"),
            n(), nrhs(), packed_ap("in"), *rhs_b(), info()]


def tb(field):
    return [uplo(), trans(),
            p("DIAG", "character", "in", "'N': A is non-unit triangular; 'U': unit triangular.",
              element="character", value="'N'"),
            n(), p("KD", "integer", "in", "The number of super- or sub-diagonals of A.", value="2"),
            nrhs(),
            p("AB", "array_2d", "in", "The triangular band matrix A in the first KD+1 rows.",
              element="scalar", dims=["LDAB", "N"]),
            p("LDAB", "integer", "in", "The leading dimension of AB, LDAB >= KD+1.", value="KD+1"),
            *rhs_b(), info()]


def gesvx(field):
    return [fact("'E'"), trans(), n(), nrhs(), *full_a(),
            p("AF", "array_2d", "out", "The factors L and U of the (equilibrated) matrix.",
              element="scalar", dims=["LDAF", "N"]),
            p("LDAF", "integer", "in", "The leading dimension of AF.", value="N"),
            ipiv(), equed(),
            p("R", "array_1d", "inout", "Row scale factors for A.", element="real", dims=["N"]),
            p("C", "array_1d", "inout", "Column scale factors for A.", element="real", dims=["N"]),
            *rhs_b(), *expert_tail(field, "2*N", "4*N" if field == "real" else "2*N")]


def gbsvx(field):
    return [fact("'E'"), trans(), n(),
            p("KL", "integer", "in", "The number of subdiagonals within the band of A.", value="2"),
            p("KU", "integer", "in", "The number of superdiagonals within the band of A.", value="1"),
            nrhs(),
            p("AB", "array_2d", "inout", "The band matrix A in rows 1 to KL+KU+1.",
              element="scalar", dims=["LDAB", "N"]),
            p("LDAB", "integer", "in", "The leading dimension of AB, LDAB >= KL+KU+1.",
              value="KL+KU+1"),
            p("AFB", "array_2d", "out", "Details of the LU factorization of the band matrix.",
              element="scalar", dims=["LDAFB", "N"]),
            p("LDAFB", "integer", "in", "The leading dimension of AFB, LDAFB >= 2*KL+KU+1.",
              value="2*KL+KU+1"),
            ipiv(), equed(),
            p("R", "array_1d", "inout", "Row scale factors for A.", element="real", dims=["N"]),
            p("C", "array_1d", "inout", "Column scale factors for A.", element="real", dims=["N"]),
            *rhs_b(), *expert_tail(field, "N", "3*N" if field == "real" else "2*N")]


def gtsvx(field):
    return [fact("'N'"), trans(), n(), nrhs(),
            p("DL", "array_1d", "in", "The (n-1) sub-diagonal elements of A.", element="scalar",
              dims=["N-1"]),
            p("D", "array_1d", "in", "The diagonal elements of A.", element="scalar", dims=["N"]),
            p("DU", "array_1d", "in", "The (n-1) super-diagonal elements of A.", element="scalar",
              dims=["N-1"]),
            p("DLF", "array_1d", "out", "Multipliers of the LU factorization.", element="scalar",
              dims=["N-1"]),
            p("DF", "array_1d", "out", "Diagonal of U.", element="scalar", dims=["N"]),
            p("DUF", "array_1d", "out", "First superdiagonal of U.", element="scalar", dims=["N-1"]),
            p("DU2", "array_1d", "out", "Second superdiagonal of U.", element="scalar",
              dims=["N-2"]),
            ipiv(), *rhs_b("in"), *expert_tail(field, "N", "3*N" if field == "real" else "2*N")]


def posvx(field):
    return [fact("'E'"), uplo(), n(), nrhs(), *full_a(),
            p("AF", "array_2d", "out", "The triangular factor of the (equilibrated) matrix.",
              element="scalar", dims=["LDAF", "N"]),
            p("LDAF", "integer", "in", "The leading dimension of AF.", value="N"),
            equed(),
            p("S", "array_1d", "inout", "Scale factors for A.", element="real", dims=["N"]),
            *rhs_b(), *expert_tail(field, "N", "3*N" if field == "real" else "2*N")]


def ppsvx(field):
    return [fact("'E'"), uplo(), n(), nrhs(), packed_ap(),
            p("AFP", "array_1d", "out", "The packed triangular factor.", element="scalar",
              dims=["N*(N+1)/2"]),
            equed(),
            p("S", "array_1d", "inout", "Scale factors for A.", element="real", dims=["N"]),
            *rhs_b(), *expert_tail(field, "N", "3*N" if field == "real" else "2*N")]


def pbsvx(field):
    return [fact("'E'"), uplo(), n(),
            p("KD", "integer", "in", "The number of super- or sub-diagonals of A.", value="2"),
            nrhs(),
            p("AB", "array_2d", "inout", "The band matrix A in the first KD+1 rows.",
              element="scalar", dims=["LDAB", "N"]),
            p("LDAB", "integer", "in", "The leading dimension of AB, LDAB >= KD+1.", value="KD+1"),
            p("AFB", "array_2d", "out", "The triangular band factor.", element="scalar",
              dims=["LDAFB", "N"]),
            p("LDAFB", "integer", "in", "The leading dimension of AFB.", value="KD+1"),
            equed(),
            p("S", "array_1d", "inout", "Scale factors for A.", element="real", dims=["N"]),
            *rhs_b(), *expert_tail(field, "N", "3*N" if field == "real" else "2*N")]


def ptsvx(field):
    head = [fact("'N'"), n(), nrhs(),
            p("D", "array_1d", "in", "The n diagonal elements of A.", element="real", dims=["N"]),
            p("E", "array_1d", "in", "The (n-1) subdiagonal elements of A.", element="scalar",
              dims=["N-1"]),
            p("DF", "array_1d", "out", "Diagonal of the factor D.", element="real", dims=["N"]),
            p("EF", "array_1d", "out", "Subdiagonal of the factor L.", element="scalar",
              dims=["N-1"]),
            *rhs_b("in")]
    if field == "real":
        return head + expert_tail(field, "N", "2*N", with_iwork=False)
    return head + expert_tail(field, "N", "N", with_iwork=True)


def sysvx(field):
    tail = expert_tail(field, "N", "LWORK")
    # LWORK sits between WORK and IWORK/RWORK.
    work_at = [i for i, q in enumerate(tail) if q["name"] == "WORK"][0]
    tail.insert(work_at + 1, p("LWORK", "integer", "in", "The length of WORK.",
                               value="3*N" if field == "real" else "2*N"))
    return [fact("'N'"), uplo(), n(), nrhs(), *full_a("in"),
            p("AF", "array_2d", "out", "The block diagonal factor and multipliers.",
              element="scalar", dims=["LDAF", "N"]),
            p("LDAF", "integer", "in", "The leading dimension of AF.", value="N"),
            ipiv(), *rhs_b("in"), *tail]


def spsvx(field):
    return [fact("'N'"), uplo(), n(), nrhs(), packed_ap("in"),
            p("AFP", "array_1d", "out", "The packed block diagonal factor.", element="scalar",
              dims=["N*(N+1)/2"]),
            ipiv(), *rhs_b("in"), *expert_tail(field, "N", "3*N" if field == "real" else "2*N")]


# code, type (real, complex), storage, params, category, method summary
SIMPLE = [
    ("GESV", ("general", "general"), "full", ge, "LU factorization with partial pivoting"),
    ("GBSV", ("general", "general"), "band", gb, "banded LU factorization with partial pivoting"),
    ("GTSV", ("general", "general"), "tridiagonal", gt, "Gaussian elimination with partial pivoting"),
    ("POSV", ("spd", "hpd"), "full", po, "Cholesky factorization"),
    ("PPSV", ("spd", "hpd"), "packed", pp, "Cholesky factorization"),
    ("PBSV", ("spd", "hpd"), "band", pb, "banded Cholesky factorization"),
    ("PTSV", ("spd", "hpd"), "tridiagonal", pt, "L*D*L**T factorization"),
    ("SYSV", ("symmetric", "symmetric"), "full", sy, "diagonal pivoting (Bunch-Kaufman) factorization"),
    ("SPSV", ("symmetric", "symmetric"), "packed", sp, "diagonal pivoting (Bunch-Kaufman) factorization"),
    ("HESV", (None, "hermitian"), "full", sy, "diagonal pivoting (Bunch-Kaufman) factorization"),
    ("HPSV", (None, "hermitian"), "packed", sp, "diagonal pivoting (Bunch-Kaufman) factorization"),
]
TRIANGULAR = [
    ("TRTRS", "full", tr),
    ("TPTRS", "packed", tp),
    ("TBTRS", "band", tb),
]
EXPERT = [
    ("GESVX", ("general", "general"), "full", gesvx, True, True),
    ("GBSVX", ("general", "general"), "band", gbsvx, True, True),
    ("GTSVX", ("general", "general"), "tridiagonal", gtsvx, True, False),
    ("POSVX", ("spd", "hpd"), "full", posvx, False, True),
    ("PPSVX", ("spd", "hpd"), "packed", ppsvx, False, True),
    ("PBSVX", ("spd", "hpd"), "band", pbsvx, False, True),
    ("PTSVX", ("spd", "hpd"), "tridiagonal", ptsvx, False, False),
    ("SYSVX", ("symmetric", "symmetric"), "full", sysvx, False, False),
    ("SPSVX", ("symmetric", "symmetric"), "packed", spsvx, False, False),
    ("HESVX", (None, "hermitian"), "full", sysvx, False, False),
    ("HPSVX", (None, "hermitian"), "packed", spsvx, False, False),
]

PREFIX = {("real", "single"): "S", ("real", "double"): "D",
          ("complex", "single"): "C", ("complex", "double"): "Z"}


def forms(field, transposable):
    if not transposable:
        return ["ax_b"]
    return ["ax_b", "atx_b"] + (["ahx_b"] if field == "complex" else [])


def describe(field, mtype, storage, precision, extra=""):
    return (f"Solve a {field} system of linear equations A * X = B with a {TYPE_WORDS[mtype]} "
            f"matrix {STORAGE_WORDS[storage]}{extra}, {precision} precision.")


def routines():
    out = []
    for field in ("real", "complex"):
        for precision in ("single", "double"):
            prefix = PREFIX[(field, precision)]
            ftype = 0 if field == "real" else 1
            for code, types, storage, params, method in SIMPLE:
                mtype = types[ftype]
                if mtype is None:
                    continue
                name = prefix + code
                out.append({
                    "id": name, "library": "LAPACK", "name": name, "precision": precision,
                    "scalar_field": field, "problem_class": "linear_solve", "matrix_type": mtype,
                    "storage": storage, "facets": {"form": forms(field, False)},
                    "template_category": "driver",
                    "description": describe(field, mtype, storage, precision),
                    "documentation":
                        f"{name} computes the solution to a {field} system of linear equations "
                        f"A * X = B, where A is an N-by-N {TYPE_WORDS[mtype]} matrix "
                        f"{STORAGE_WORDS[storage]} and X and B are N-by-NRHS matrices. The "
                        f"{method} of A is computed first and the factored form of A is then used "
                        f"to solve the system of equations A * X = B. If INFO > 0 the factor is "
                        f"singular (or the leading minor is not positive) and the solution could "
                        f"not be computed.",
                    "parameters": params(field),
                })
            for code, storage, params in TRIANGULAR:
                name = prefix + code
                out.append({
                    "id": name, "library": "LAPACK", "name": name, "precision": precision,
                    "scalar_field": field, "problem_class": "linear_solve",
                    "matrix_type": "triangular", "storage": storage,
                    "facets": {"form": forms(field, True)},
                    "template_category": "triangular_solve",
                    "description": describe(field, "triangular", storage, precision,
                                            ", or its transpose system"),
                    "documentation":
                        f"{name} solves a triangular system of the form A * X = B, A**T * X = B"
                        + (" or A**H * X = B" if field == "complex" else "") +
                        f", where A is a {field} triangular matrix of order N "
                        f"{STORAGE_WORDS[storage]}, and B is an N-by-NRHS matrix. A check is made "
                        f"to verify that A is nonsingular.",
                    "parameters": params(field),
                })
            for code, types, storage, params, transposable, equilibrates in EXPERT:
                mtype = types[ftype]
                if mtype is None:
                    continue
                name = prefix + code
                eq_doc = (" Row and/or column equilibration is applied when the matrix is poorly "
                          "scaled, and EQUED reports which scaling was used."
                          if equilibrates else "")
                out.append({
                    "id": name, "library": "LAPACK", "name": name, "precision": precision,
                    "scalar_field": field, "problem_class": "linear_solve_expert",
                    "matrix_type": mtype, "storage": storage,
                    "facets": {"form": forms(field, transposable)},
                    "template_category": "expert_equilibrated" if equilibrates else "expert_driver",
                    "description": describe(field, mtype, storage, precision,
                                            " and estimate the condition number and error bounds"),
                    "documentation":
                        f"{name} uses a factorization to compute the solution to a {field} system "
                        f"of linear equations A * X = B, where A is an N-by-N {TYPE_WORDS[mtype]} "
                        f"matrix {STORAGE_WORDS[storage]}. Error bounds on the solution and a "
                        f"condition estimate are also provided. Iterative refinement is applied to "
                        f"improve the computed solution matrix.{eq_doc}",
                    "parameters": params(field),
                })
    return out


# --- tree --------------------------------------------------------------------

def build(routine_list):
    questions = {}
    nodes = []
    counter = [0]

    def question_for(facet, keys):
        sig = (facet, tuple(keys))
        if sig not in questions:
            qid = f"{facet}_{sum(1 for f, _ in questions if f == facet) + 1}"
            labels = dict(OPTIONS[facet])
            questions[sig] = {"id": qid, "text": QUESTION_TEXT[facet], "facet": facet,
                              "options": [{"key": k, "text": labels[k]} for k in keys]}
        return questions[sig]["id"]

    def values(r, facet):
        if facet == "form":
            return r["facets"]["form"]
        return [r[facet]]

    def grow(rs, facets):
        node_id = f"n{counter[0]}"
        counter[0] += 1
        node = {"id": node_id}
        nodes.append(node)
        for i, facet in enumerate(facets):
            present = {v for r in rs for v in values(r, facet)}
            keys = [k for k, _ in OPTIONS[facet] if k in present]
            if len(keys) < 2:
                continue
            node["question"] = question_for(facet, keys)
            node["edges"] = []
            for k in keys:
                sub = [r for r in rs if k in values(r, facet)]
                node["edges"].append({"option": k, "node": grow(sub, facets[i + 1:])})
            return node_id
        node["payload"] = sorted(r["id"] for r in rs)
        return node_id

    grow(routine_list, FACET_ORDER)
    qs = sorted(questions.values(), key=lambda q: (FACET_ORDER.index(q["facet"]), q["id"]))
    return {"format_version": 1, "routines": routine_list, "questions": qs,
            "trees": [{"library": "LAPACK", "root": "n0", "nodes": nodes}]}


SMALL = ["DGESV", "SGESV", "DGBSV", "SGBSV", "DGTSV", "DPOSV", "DPBSV", "ZGESV", "ZGBSV",
         "DTRTRS", "DTPTRS", "DGESVX"]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    full = routines()
    (OUT / "lapack_linear.json").write_text(json.dumps(build(full), indent=2) + "\n")
    by_id = {r["id"]: r for r in full}
    small = [by_id[i] for i in SMALL]
    (OUT / "lapack_small.json").write_text(json.dumps(build(small), indent=2) + "\n")
    print(f"{len(full)} routines in lapack_linear.json, {len(small)} in lapack_small.json")


if __name__ == "__main__":
    main()
