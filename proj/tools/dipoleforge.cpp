#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dipoleforge/errors.hpp"
#include "dipoleforge/io.hpp"
#include "dipoleforge/run.hpp"

using dipoleforge::RunRequest;

namespace {

nlohmann::json read_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw dipoleforge::InputError("--config", "cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw dipoleforge::InputError("--config", std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Giant-dipole electron trap simulations"};
    app.set_version_flag("--version", dipoleforge::version_string);
    app.require_subcommand(1);

    RunRequest request;
    std::string config_path;
    std::string out;
    bool print_config = false;

    for (const auto& name : dipoleforge::experiments()) {
        auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--out", out, "output directory (default $DIPOLEFORGE_OUT/<experiment> or runs/<experiment>)");
        sub->add_option("--jobs", request.jobs, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--scale", request.scale_flag, "demo or paper")->check(CLI::IsMember({"demo", "paper"}));
        sub->add_option("--set", request.overrides, "override a config key, e.g. grid.n_points=4096");
        sub->add_flag("--print-config", print_config, "print the resolved config and exit");
    }

    CLI11_PARSE(app, argc, argv);
    request.experiment = app.get_subcommands().front()->get_name();
    request.out = out;

    try {
        if (!config_path.empty()) request.config = read_config(config_path);
        if (print_config) {
            std::cout << dipoleforge::resolve_config(request).dump(2) << "\n";
            return 0;
        }
        const auto manifest = dipoleforge::run(request);
        std::cout << nlohmann::json{{"manifest", (dipoleforge::output_directory(request) / "manifest.json").string()},
                                    {"wall_time_s", manifest.at("wall_time_s")}}
                         .dump()
                  << "\n";
        return 0;
    } catch (const std::exception& e) {
        const auto body = dipoleforge::error_json(e);
        std::cerr << body.dump() << "\n";
        try {
            dipoleforge::write_atomic(dipoleforge::output_directory(request) / "error.json", body.dump(2) + "\n");
        } catch (const std::exception&) {
        }
        return dipoleforge::exit_code(e);
    }
}
