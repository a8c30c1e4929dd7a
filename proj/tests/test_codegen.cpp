#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <regex>
#include <set>

#include "doctest.h"
#include "lh/codegen.hpp"
#include "lh/error.hpp"
#include "lh/util.hpp"
#include "support/process.hpp"

using namespace lh::codegen;
using lh::taxonomy::Taxonomy;

namespace {

const std::string kData = LH_TEST_DATA_DIR;
const std::string kGolden = std::string(LH_TEST_SOURCE_DIR) + "/golden";

const Taxonomy& full() {
  static const Taxonomy t = Taxonomy::load(kData + "/taxonomy/lapack_linear.json");
  return t;
}

const TemplateStore& store() {
  static const TemplateStore s(kData + "/templates");
  return s;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

// File names listed under "Files:" in a generated README.
std::set<std::string> readme_files(const std::string& readme) {
  std::set<std::string> out;
  const auto lines = lh::split(readme, '\n');
  auto it = std::find(lines.begin(), lines.end(), "Files:");
  REQUIRE(it != lines.end());
  for (++it; it != lines.end() && !lh::trim(*it).empty(); ++it) {
    const auto entry = std::string(lh::trim(*it));
    out.insert(entry.substr(0, entry.find(' ')));
  }
  return out;
}

std::set<std::string> paths(const Bundle& b) {
  std::set<std::string> out;
  for (const auto& f : b.files) out.insert(f.path);
  return out;
}

bool lapack_linkable() {
  static const bool ok = [] {
    if (!lh::test::have_program("cc")) return false;
    lh::test::TempDir dir;
    lh::write_file(dir.path() / "t.c", "extern void dgesv_(void);\nint main(void) { return 0; }\n");
    return lh::test::run_command("cc -o " + (dir.path() / "t").string() + " " + (dir.path() / "t.c").string() +
                                 " -llapack -lblas")
               .exit_code == 0;
  }();
  return ok;
}

// gfortran under its plain or versioned name.
std::string fortran_compiler() {
  if (const char* fc = std::getenv("FC"); fc && lh::test::have_program(fc)) return fc;
  for (const std::string name : {"gfortran", "gfortran-14", "gfortran-13", "gfortran-12", "gfortran-11",
                                 "gfortran-10", "gfortran-9"})
    if (lh::test::have_program(name)) return name;
  return {};
}

}  // namespace

TEST_CASE("template engine") {
  Context ctx;
  ctx.set("name", "DGBSV").set("n", "8");
  Context a, b;
  a.set("item", "x");
  b.set("item", "y").set("name", "inner");
  ctx.set("list", Context::List{a, b});

  CHECK(render("call {{name}}({{ n }})", ctx) == "call DGBSV(8)");
  CHECK(render("{{#list}}[{{item}}:{{name}}]{{/list}}", ctx) == "[x:DGBSV][y:inner]");
  CHECK(render("a\n  {{#list}}\n- {{item}}\n  {{/list}}\nb\n", ctx) == "a\n- x\n- y\nb\n");
  CHECK(render("{{#list}}{{/list}}", Context{}.set("list", Context::List{})) == "");
  CHECK(placeholders("{{a}} {{#l}}{{b}}{{a}}{{/l}}") == std::vector<std::string>{"a", "l", "b"});

  SUBCASE("unbound placeholder names its location") {
    try {
      render("line one\n  {{missing}}\n", ctx, "t.tmpl");
      FAIL("expected an error");
    } catch (const lh::LocatedError& e) {
      CHECK(e.kind() == lh::ErrorKind::validation);
      CHECK(e.line() == 2);
      CHECK(e.column() == 3);
      CHECK(std::string(e.what()).find("missing") != std::string::npos);
    }
  }
  SUBCASE("malformed templates") {
    CHECK_THROWS_AS(render("{{#list}}open", ctx), lh::LocatedError);
    CHECK_THROWS_AS(render("{{/list}}", ctx), lh::LocatedError);
    CHECK_THROWS_AS(render("{{name", ctx), lh::LocatedError);
    CHECK_THROWS_AS(render("{{list}}", ctx), lh::LocatedError);
    CHECK_THROWS_AS(render("{{#name}}x{{/name}}", ctx), lh::LocatedError);
    CHECK_THROWS_AS(render("{{bad name}}", ctx), lh::LocatedError);
  }
  SUBCASE("a binding cannot smuggle in a placeholder") {
    CHECK_THROWS_AS(render("{{v}}", Context{}.set("v", "{{x}}")), lh::Error);
  }
}

TEST_CASE("template store") {
  lh::test::TempDir dir;
  lh::write_file(dir.path() / "a.tmpl", "one {{x}}");
  TemplateStore s(dir.path());
  CHECK(s.has("a.tmpl"));
  CHECK_FALSE(s.has("b.tmpl"));
  CHECK(s.get("a.tmpl") == "one {{x}}");
  lh::write_file(dir.path() / "a.tmpl", "two {{x}}");
  CHECK(s.get("a.tmpl") == "one {{x}}");
  s.reload();
  CHECK(s.get("a.tmpl") == "two {{x}}");
  try {
    s.get("b.tmpl");
    FAIL("expected an error");
  } catch (const lh::Error& e) {
    CHECK(e.kind() == lh::ErrorKind::not_found);
  }
}

TEST_CASE("routine drivers render for every routine") {
  static const std::regex fortran_decl(R"(^\s*(integer|real\(wp\)|complex\(wp\)|character)[ ,].*::\s*(\w+))");
  static const std::regex c_decl(R"(^static \w+(?: _Complex)? \*?(\w+);$)");
  for (const auto& r : full().routines()) {
    for (auto lang : {Language::fortran90, Language::c}) {
      CAPTURE(r.name);
      CAPTURE(to_string(lang));
      const auto src = render_routine_template(full(), r.id, lang, store());
      CHECK(src == render_routine_template(full(), r.id, lang, store()));
      CHECK(src.find("{{") == std::string::npos);
      CHECK(lint_source(src, lang).empty());

      // One declaration per argument, in argument order.
      std::vector<std::string> declared;
      bool in_module = lang == Language::fortran90;
      for (const auto& line : lh::split(src, '\n')) {
        std::smatch m;
        if (line.rfind("end module", 0) == 0) in_module = false;
        if (in_module && std::regex_search(line, m, fortran_decl) && m[2] != "wp") declared.push_back(m[2]);
        if (lang == Language::c && std::regex_match(line, m, c_decl)) declared.push_back(m[1]);
        if (lang == Language::fortran90) CHECK(line.size() <= 132);
      }
      std::vector<std::string> want;
      for (const auto& p : r.parameters) want.push_back(p.name);
      CHECK(declared == want);

      std::vector<std::string> call_args;
      const auto call = lang == Language::fortran90 ? "call " + r.name + "(" : lh::to_lower(r.name) + "_(";
      auto pos = src.find(call, src.find(lang == Language::fortran90 ? "subroutine solve" : "static void solve"));
      REQUIRE(pos != std::string::npos);
      auto args = src.substr(pos + call.size(), src.find(')', pos) - pos - call.size());
      for (auto& a : lh::split(args, ',')) {
        std::string t;
        for (char ch : a)
          if (!std::isspace(static_cast<unsigned char>(ch))) t += ch;
        if (lang == Language::fortran90) std::erase(t, '&');
        else if (!t.empty() && t.front() == '&') t = t.substr(1);
        call_args.push_back(t);
      }
      if (lang == Language::c) {
        const auto chars = std::count_if(r.parameters.begin(), r.parameters.end(), [](const auto& p) {
          return p.kind == lh::taxonomy::ParamKind::character;
        });
        for (long i = 0; i < chars; ++i) {
          CHECK(call_args.back() == "1");  // hidden character lengths
          call_args.pop_back();
        }
      }
      CHECK(call_args == want);
    }
  }
}

TEST_CASE("DGBSV Fortran driver matches the reviewed output") {
  const auto src = render_routine_template(full(), "DGBSV", Language::fortran90, store());
  const auto golden = kGolden + "/dgbsv_driver.f90";
  if (std::getenv("LH_UPDATE_GOLDEN")) lh::write_file(golden, src);
  CHECK(src == lh::read_file(golden));
  CHECK(src.find("integer, parameter :: wp = kind(1.0d0)") != std::string::npos);
  CHECK(src.find("AB(LDAB - KL + i - j, j) = aval(i, j)") != std::string::npos);
  CHECK(src.find("LDAB = 2*KL+KU+1") < src.find("allocate(AB(LDAB, N))"));
}

TEST_CASE("category templates") {
  const auto gesvx = render_routine_template(full(), "DGESVX", Language::fortran90, store());
  CHECK(gesvx.find("select case (EQUED)") != std::string::npos);
  for (const char* c : {"case ('N')", "case ('R')", "case ('C')", "case ('B')", "case ('Y')"})
    CHECK(gesvx.find(c) != std::string::npos);
  CHECK(gesvx.find("0.1") != std::string::npos);
  CHECK(gesvx.find("err = maxval(abs(X(1:N, 1:NRHS) - 1.0_wp))") != std::string::npos);
  const auto gbsv_c = render_routine_template(full(), "DGBSV", Language::c, store());
  CHECK(gbsv_c.find("extern void dgbsv_(int *n, int *kl, int *ku, int *nrhs, double *ab,") != std::string::npos);
  const auto sposv = render_routine_template(full(), "SPOSV", Language::fortran90, store());
  CHECK(sposv.find("kind(1.0e0)") != std::string::npos);
  CHECK(sposv.find("1.0e-3_wp") != std::string::npos);
  const auto zgesvx_c = render_routine_template(full(), "ZGESVX", Language::c, store());
  CHECK(zgesvx_c.find("static double _Complex *A;") != std::string::npos);
  CHECK(zgesvx_c.find("static double *R;") != std::string::npos);
  CHECK(zgesvx_c.find("cabs(") != std::string::npos);
  CHECK(zgesvx_c.find("switch (EQUED)") != std::string::npos);
  CHECK_THROWS_AS(render_routine_template(full(), "NOPE", Language::c, store()), lh::Error);
  CHECK_THROWS_AS(render_routine_template(full(), "DGBSV", Language::c, TemplateStore("/nonexistent")), lh::Error);
}

TEST_CASE("generated C drivers compile, link and solve") {
  if (!lapack_linkable()) {
    MESSAGE("skipped: no C compiler with LAPACK available");
    return;
  }
  lh::test::TempDir dir;
  std::size_t passed = 0;
  for (const auto& r : full().routines()) {
    CAPTURE(r.name);
    const auto bundle = routine_bundle(full(), r.id, Language::c, store());
    const auto sub = dir.path() / r.id;
    std::filesystem::create_directories(sub);
    for (const auto& f : bundle.files) lh::write_file(sub / f.path, f.content);
    const auto program = lh::to_lower(r.name) + "_driver";
    const auto built = lh::test::run_command("make -s -C " + sub.string() + " CFLAGS='-O0 -Wall -Werror'");
    REQUIRE_MESSAGE(built.exit_code == 0, built.output);
    const auto ran = lh::test::run_command((sub / program).string());
    CHECK_MESSAGE(ran.exit_code == 0, ran.output);
    CHECK(ran.output.find("PASSED") != std::string::npos);
    if (ran.exit_code == 0) ++passed;
  }
  CHECK(passed == full().routines().size());
}

TEST_CASE("generated Fortran drivers compile, link and solve") {
  const auto fc = fortran_compiler();
  if (fc.empty() || !lapack_linkable()) {
    MESSAGE("skipped: no Fortran compiler with LAPACK available");
    return;
  }
  lh::test::TempDir dir;
  std::size_t passed = 0;
  for (const auto& r : full().routines()) {
    CAPTURE(r.name);
    const auto bundle = routine_bundle(full(), r.id, Language::fortran90, store());
    const auto sub = dir.path() / r.id;
    std::filesystem::create_directories(sub);
    for (const auto& f : bundle.files) lh::write_file(sub / f.path, f.content);
    const auto built =
        lh::test::run_command("make -s -C " + sub.string() + " FC=" + fc + " FFLAGS='-O0 -Wall -Werror -std=f2008'");
    REQUIRE_MESSAGE(built.exit_code == 0, built.output);
    const auto ran = lh::test::run_command((sub / (lh::to_lower(r.name) + "_driver")).string());
    CHECK_MESSAGE(ran.exit_code == 0, ran.output);
    CHECK(ran.output.find("PASSED") != std::string::npos);
    if (ran.exit_code == 0) ++passed;
  }
  CHECK(passed == full().routines().size());
}

TEST_CASE("routine bundles") {
  for (auto lang : {Language::fortran90, Language::c}) {
    const auto b = routine_bundle(full(), "DGBSV", lang, store());
    const auto source = std::string("dgbsv_driver.") + std::string(extension(lang));
    CHECK(paths(b) == std::set<std::string>{source, "makefile", "README"});
    CHECK(readme_files(b.find("README")->content) == paths(b));
    const auto& mk = b.find("makefile")->content;
    CHECK(mk.find("\t$(") != std::string::npos);
    CHECK(mk.find("-llapack -lblas") != std::string::npos);
    CHECK(b == routine_bundle(full(), "DGBSV", lang, store()));
    CHECK(b.manifest().size() == 3);
  }
}

TEST_CASE("validate_bundle") {
  const Bundle ok{{{"a.c", "int x;"}, {"makefile", "all:"}, {"README", "r"}}};
  CHECK_NOTHROW(validate_bundle(ok));
  auto with = [&](BundleFile f) {
    auto b = ok;
    b.files.push_back(std::move(f));
    return b;
  };
  CHECK_THROWS_AS(validate_bundle(with({"/abs.c", ""})), lh::Error);
  CHECK_THROWS_AS(validate_bundle(with({"../up.c", ""})), lh::Error);
  CHECK_THROWS_AS(validate_bundle(with({"a.c", ""})), lh::Error);
  CHECK_THROWS_AS(validate_bundle(with({"x.txt", "{{left}}"})), lh::Error);
  CHECK_THROWS_AS(validate_bundle(Bundle{{{"a.c", ""}, {"README", ""}}}), lh::Error);
  CHECK_THROWS_AS(validate_bundle(Bundle{{{"makefile", ""}, {"README", ""}}}), lh::Error);
  CHECK_THROWS_AS(validate_bundle(Bundle{{{"a.c", ""}, {"makefile", ""}}}), lh::Error);
}

TEST_CASE("solver bundles") {
  using lh::mlselect::SolverConfig;
  SUBCASE("recommended linear solver") {
    const auto cfg = SolverConfig::parse("gmres/ilu(1)");
    const auto b = generate_solver_bundle(SolverBundleKind::recommended_solver, cfg, false, store());
    CHECK(paths(b) == std::set<std::string>{"solver.c", "makefile", "options.txt", "README"});
    CHECK(readme_files(b.find("README")->content) == paths(b));
    const auto& opts = b.find("options.txt")->content;
    CHECK(count(opts, "gmres") == 1);
    CHECK(count(opts, "ilu") == 1);
    CHECK(opts.find("-ksp_type gmres\n") != std::string::npos);
    CHECK(opts.find("-pc_type ilu\n") != std::string::npos);
    CHECK(opts.find("-pc_factor_levels 1\n") != std::string::npos);
    for (const auto& line : lh::split(lh::trim(opts), '\n')) CHECK(line.rfind("-", 0) == 0);
    CHECK(lint_source(b.find("solver.c")->content, Language::c).empty());
    CHECK(b.find("solver.c")->content.find("KSPSetFromOptions") != std::string::npos);
    CHECK(b.find("makefile")->content.find("${PETSC_DIR}/lib/petsc/conf/rules") != std::string::npos);
    CHECK(b == generate_solver_bundle(SolverBundleKind::recommended_solver, cfg, false, store()));
  }
  SUBCASE("name mapping and parallel runs") {
    CHECK(solver_options(SolverConfig::parse("bicgstab/block_jacobi"), false) ==
          std::vector<std::string>{"-ksp_type bcgs", "-pc_type bjacobi"});
    CHECK(solver_options(SolverConfig::parse("cg/ilu(2)"), true) ==
          std::vector<std::string>{"-ksp_type cg", "-pc_type bjacobi", "-sub_pc_type ilu", "-sub_pc_factor_levels 2"});
    CHECK(solver_options(SolverConfig::parse("cg/jacobi"), true) ==
          std::vector<std::string>{"-ksp_type cg", "-pc_type jacobi"});
    const auto b = generate_solver_bundle(SolverBundleKind::recommended_solver, SolverConfig::parse("tfqmr/sor"), true,
                                          store());
    CHECK(b.find("makefile")->content.find("${MPIEXEC} -n 4 ./solver") != std::string::npos);
  }
  SUBCASE("eigensolver") {
    const auto b = generate_solver_bundle(SolverBundleKind::recommended_solver,
                                          SolverConfig::parse("generalized_davidson"), false, store());
    CHECK(paths(b) == std::set<std::string>{"eigensolver.c", "makefile", "options.txt", "README"});
    CHECK(b.find("options.txt")->content.find("-eps_type gd\n") != std::string::npos);
    CHECK(b.find("eigensolver.c")->content.find("EPSSetFromOptions") != std::string::npos);
    CHECK(b.find("makefile")->content.find("SLEPC_DIR") != std::string::npos);
    CHECK(lint_source(b.find("eigensolver.c")->content, Language::c).empty());
  }
  SUBCASE("default solver and properties program") {
    const auto d = generate_solver_bundle(SolverBundleKind::default_solver, std::nullopt, false, store());
    CHECK(d.find("options.txt")->content.find("-ksp_type") == std::string::npos);
    CHECK(d.find("solver.c") != nullptr);
    const auto p = generate_solver_bundle(SolverBundleKind::properties_program, std::nullopt, false, store());
    CHECK(paths(p) == std::set<std::string>{"properties.c", "makefile", "options.txt", "README"});
    CHECK(lint_source(p.find("properties.c")->content, Language::c).empty());
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(generate_solver_bundle(SolverBundleKind::recommended_solver, std::nullopt, false, store()),
                    lh::Error);
    CHECK_THROWS_AS(
        generate_solver_bundle(SolverBundleKind::default_solver, SolverConfig::parse("cg"), false, store()),
        lh::Error);
    CHECK_THROWS_AS(
        generate_solver_bundle(SolverBundleKind::recommended_solver, SolverConfig::parse("nope"), false, store()),
        lh::Error);
    CHECK_THROWS_AS(solver_options(SolverConfig::parse("cg;frob=1"), false), lh::Error);
    CHECK(parse_solver_bundle_kind("Recommended") == SolverBundleKind::recommended_solver);
    CHECK_THROWS_AS(parse_solver_bundle_kind("other"), lh::Error);
  }
}

TEST_CASE("archives") {
  const auto b = routine_bundle(full(), "DGBSV", Language::fortran90, store());
  const auto zip = package_archive(b);
  CHECK(zip == package_archive(b));
  CHECK(unpack_archive(zip) == b);
  CHECK(zip.substr(0, 4) == std::string("PK\x03\x04", 4));

  auto changed = b;
  changed.files[0].content += "\n";
  CHECK(package_archive(changed) != zip);

  SUBCASE("independent reader") {
    if (!lh::test::have_program("python3")) {
      MESSAGE("skipped: python3 not available");
      return;
    }
    lh::test::TempDir dir;
    lh::write_file(dir.path() / "b.zip", zip);
    lh::write_file(dir.path() / "check.py",
                   "import sys, zipfile\n"
                   "z = zipfile.ZipFile(sys.argv[1])\n"
                   "assert z.testzip() is None\n"
                   "for i in z.infolist():\n"
                   "    assert i.date_time == (1980, 1, 1, 0, 0, 0), i.date_time\n"
                   "    sys.stdout.write('%s %d\\n' % (i.filename, len(z.read(i))))\n");
    const auto r = lh::test::run_command("python3 " + (dir.path() / "check.py").string() + " " +
                                         (dir.path() / "b.zip").string());
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    std::string want;
    for (const auto& [path, size] : b.manifest()) want += path + " " + std::to_string(size) + "\n";
    CHECK(r.output == want);
  }
  SUBCASE("damage is detected") {
    CHECK_THROWS_AS(unpack_archive(zip.substr(0, zip.size() / 2)), lh::Error);
    CHECK_THROWS_AS(unpack_archive("not a zip at all, definitely not"), lh::Error);
    auto bad = zip;
    bad[14] = static_cast<char>(bad[14] ^ 0xff);  // first entry's CRC in the local header
    const auto cd = bad.find(std::string("PK\x01\x02", 4));
    bad[cd + 16] = static_cast<char>(bad[cd + 16] ^ 0xff);  // and in the central directory
    CHECK_THROWS_AS(unpack_archive(bad), lh::Error);
  }
}

TEST_CASE("lint_source") {
  CHECK(lint_source("int main(void) { const char* s = \"}\"; /* { */ return s[0] == '{'; }\n", Language::c).empty());
  CHECK(lint_source("int f(void) { return 0;\n", Language::c).size() == 1);
  CHECK(lint_source("int f(void) { return (0; }\n", Language::c).size() >= 1);
  CHECK(lint_source("program p\n  integer :: i\n  do i = 1, 3\n    if (i > 1) then\n      print *, 'end do'\n"
                    "    end if\n  end do\nend program p\n",
                    Language::fortran90)
            .empty());
  CHECK_FALSE(lint_source("program p\n  do i = 1, 3\n  print *, i\nend program p\n", Language::fortran90).empty());
  CHECK_FALSE(lint_source("subroutine s()\nend function s\n", Language::fortran90).empty());
  CHECK_FALSE(lint_source("end do\n", Language::fortran90).empty());
  CHECK(lint_source("module m\ncontains\n  real function f(x)\n    real :: x\n    f = x\n  end function f\nend module m\n",
                    Language::fortran90)
            .empty());
  CHECK(lint_source("if (x > 0) y = 1\nselect case (k)\ncase (1)\nend select\n", Language::fortran90).empty());
}
