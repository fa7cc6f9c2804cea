#![no_main]

use libfuzzer_sys::fuzz_target;
use tsagrid::scenario::{parse_scenario, run_sweep, write_table, Format};

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let Ok(scn) = parse_scenario(&text) else { return };
    if scn.grid().len() > 64 {
        return;
    }
    let Ok(table) = run_sweep(&scn, Some(1)) else { return };
    for row in &table.rows {
        assert_eq!(row.cells.len(), table.columns.len());
    }
    let mut buf = Vec::new();
    write_table(&table, &mut buf, Format::Csv).unwrap();
    write_table(&table, &mut buf, Format::Jsonl).unwrap();
});
