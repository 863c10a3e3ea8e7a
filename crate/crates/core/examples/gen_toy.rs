//! Regenerates the toy source tables shipped under data/toy.

fn main() {
    let dir = kgemb::fixture::shipped_toy_dir();
    let paths = kgemb::fixture::write_toy_tables(&dir).expect("write toy tables");
    println!("wrote {}", paths.combo.parent().unwrap().display());
}
