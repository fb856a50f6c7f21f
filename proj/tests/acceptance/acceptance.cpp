// Acceptance battery: one PASS/FAIL line per criterion. Exits 1 if any
// criterion fails. Optional argument: artifact directory.

#include <cstdio>
#include <iostream>
#include <string>
#include <thread>

#include "ohj/suite.hpp"

int main(int argc, char** argv) {
  ohj::RunContext ctx;
  if (argc > 1) ctx.sink = ohj::ArtifactSink(argv[1]);
  ctx.jobs = int(std::max(1u, std::min(4u, std::thread::hardware_concurrency())));
  ohj::SuiteResult res;
  try {
    res = ohj::run_suite(ctx, [](const std::string& name, double s) {
      std::fprintf(stderr, "  ran %-20s %8.1f s\n", name.c_str(), s);
    });
  } catch (const std::exception& e) {
    std::cout << "FAIL suite aborted: " << e.what() << "\n";
    return 1;
  }
  for (const auto& c : res.criteria) {
    std::printf("%s criterion %2d: %s [%.1f s%s]%s%s\n", c.passed ? "PASS" : "FAIL", c.number, c.title.c_str(),
                c.seconds, c.time_limit > 0 ? (", limit " + ohj::fmt_num(c.time_limit) + " s").c_str() : "",
                c.detail.empty() ? "" : " -- ", c.detail.c_str());
  }
  if (ctx.sink.enabled()) ctx.sink.write("suite.json", ohj::suite_to_json(res).dump(2) + "\n");
  return res.passed() ? 0 : 1;
}
