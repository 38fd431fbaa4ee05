#![no_main]

use curvecongeal::io::{parse_params_table, render_params_table};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(params) = parse_params_table(text) {
        assert!(params.iter().all(|p| p.alpha > 0.0));
        assert_eq!(parse_params_table(&render_params_table(&params)).unwrap(), params);
        for p in &params {
            let _ = curvecongeal::warp_function(p, 16);
        }
    }
});
