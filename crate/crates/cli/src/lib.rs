//! Command-line pipeline: configuration resolution and the `fit`, `index`,
//! `search` and `re_rank` stages.

pub mod config;
pub mod error;
pub mod stages;

pub use error::{category, CliError};
pub use stages::{resolve, run, Invocation, Stage};

/// Splits dotted `--a.b=value` / `--a.b value` overrides out of `args`,
/// returning the remaining arguments and the overrides in order.
pub fn extract_overrides(args: impl IntoIterator<Item = String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut iter = args.into_iter().peekable();
    while let Some(arg) = iter.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match value {
            Some(v) => v,
            None => match iter.peek() {
                Some(next) if !next.starts_with("--") => iter.next().unwrap(),
                _ => "true".to_string(),
            },
        };
        overrides.push((key, value));
    }
    (rest, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overrides_are_split_out() {
        let (rest, ov) = extract_overrides(strings(&[
            "lir",
            "fit",
            "--config",
            "a.yaml",
            "--data.train_dataset.path=x.tsv",
            "--trainer.train_config.epochs",
            "3",
            "--force",
        ]));
        assert_eq!(rest, strings(&["lir", "fit", "--config", "a.yaml", "--force"]));
        assert_eq!(
            ov,
            [
                ("data.train_dataset.path".to_string(), "x.tsv".to_string()),
                ("trainer.train_config.epochs".to_string(), "3".to_string())
            ]
        );
    }
}
