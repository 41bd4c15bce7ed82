#![no_main]

use libfuzzer_sys::fuzz_target;
use nvnmr::chemshift::{resolvable, MoleculeSpec};
use nvnmr::io::from_json;
use nvnmr::{FieldConfig, Validate};

fuzz_target!(|data: &[u8]| {
    let Ok(mol) = from_json::<MoleculeSpec>(data) else {
        return;
    };
    if mol.validate().is_err() || mol.lines.len() > 8 {
        return;
    }
    if let Ok(pairs) = resolvable(&mol, FieldConfig::tesla(5.0), 470.0) {
        let n = mol.lines.len();
        assert_eq!(pairs.len(), n * (n - 1) / 2);
    }
});
