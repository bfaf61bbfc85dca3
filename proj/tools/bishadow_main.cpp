#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <bishadow/cli.hpp>

int main(int argc, char** argv)
{
    namespace cli = bishadow::cli;
    CLI::App app{"Bi-shadowing toolkit for non-autonomous discrete systems"};
    app.require_subcommand(1);

    cli::Invocation inv;
    std::string out;
    std::uint64_t seed = 0;
    struct Sub {
        const char* name;
        const char* help;
        int (*run)(const cli::Invocation&, std::ostream&);
    };
    const Sub subs[] = {
        {"certify", "certify semi-hyperbolicity and write the certificate", cli::cmd_certify},
        {"shadow", "finite or window-doubling shadowing run", cli::cmd_shadow},
        {"limit", "limit shadowing run with band report", cli::cmd_limit},
        {"asym", "asymptotic shadowing run with rate report", cli::cmd_asym},
        {"bench", "constant-tightness sweep to CSV", cli::cmd_bench},
    };
    for (const auto& s : subs) {
        auto* sc = app.add_subcommand(s.name, s.help);
        sc->add_option("--config", inv.config_path, "config file")->required();
        sc->add_option("--out", out, "output directory");
        sc->add_option("--seed", seed, "RNG seed (overrides the config)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : cli::config_failure;
    }
    for (const auto& s : subs) {
        auto* sc = app.get_subcommand(s.name);
        if (!sc->parsed())
            continue;
        if (sc->count("--out"))
            inv.out = out;
        if (sc->count("--seed"))
            inv.seed = seed;
        return s.run(inv, std::cerr);
    }
    return cli::config_failure;
}
