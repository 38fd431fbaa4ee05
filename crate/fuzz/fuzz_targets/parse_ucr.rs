#![no_main]

use curvecongeal::io::{parse_ucr, render_dataset, DatasetFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(parsed) = parse_ucr(text) {
        let rows = parsed.rows.len();
        assert_eq!(parsed.labels.as_ref().map(Vec::len), Some(rows));
        assert!(parsed.rows.iter().all(|r| r.len() == parsed.rows[0].len()));
        let again = parse_ucr(&render_dataset(&parsed, DatasetFormat::Ucr).unwrap()).unwrap();
        assert_eq!(again, parsed);
        let _ = parsed.into_curve_set();
    }
});
