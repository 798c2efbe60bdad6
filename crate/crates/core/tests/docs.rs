//! The checked-in default rule table must match the built-in rules.

use std::path::Path;

use bsrt_core::{default_config, RuleConfig};

#[test]
fn default_rules_file_is_current() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/default_rules.json");
    let expected = default_config().to_json();
    if std::env::var_os("BSRT_BLESS_DOCS").is_some() {
        std::fs::write(&path, &expected).unwrap();
    }
    let on_disk = std::fs::read_to_string(&path).unwrap();
    assert_eq!(on_disk, expected, "rerun with BSRT_BLESS_DOCS=1 to regenerate");
    assert_eq!(RuleConfig::load(&path).unwrap(), default_config());
}
