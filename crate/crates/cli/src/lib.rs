//! Command-line front end: argument parsing, reports and the commands.

pub mod args;
pub mod commands;
pub mod report;
pub mod watch;

use std::io::Write;

pub use args::Cli;
pub use report::RunReport;

use args::Command;

/// Runs one command and returns the process exit status.
pub fn run(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    match &cli.command {
        Command::Check(c) => commands::cmd_check(c, out),
        Command::Privacy(c) => {
            let mut c = c.clone();
            c.flags.mode = args::ModeArg::Privacy;
            commands::cmd_check(&c, out)
        }
        Command::Mitigate(c) => commands::cmd_mitigate(c, out),
        Command::Watch(c) => watch::cmd_watch(c, out),
        Command::Gen(c) => commands::cmd_gen(c, out),
        Command::Bench(c) => commands::cmd_bench(c, out),
    }
}
