//! Write a feature database in the binary SFDB layout and read it back.

use anchor_calib::io::{encode_sfdb, read_sfdb, write_sfdb};
use anchor_calib::types::FeatureDatabase;

fn main() -> anchor_calib::Result<()> {
    let db = FeatureDatabase::from_rows(3, [[0.5f32, 1.0, -2.0], [0.25, 0.0, 4.5]])?;
    let bytes = encode_sfdb(&db);
    println!(
        "{} rows x {} dims -> {} bytes",
        db.len(),
        db.dim(),
        bytes.len()
    );
    println!("header: {:02x?}", &bytes[..20]);

    let dir = std::env::temp_dir().join(format!("anchor-calib-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("features.sfdb");
    write_sfdb(&path, &db)?;
    let back = read_sfdb(&path)?;
    assert_eq!(back, db);
    println!("round trip through {} ok", path.display());
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
