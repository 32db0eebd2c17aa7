//! Building generated C with the host toolchain and a minimal file-driven
//! driver that reads and writes vector files.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use tnnc_core::codegen::GeneratedBundle;

pub const C_FLAGS: &[&str] = &["-std=c99", "-pedantic", "-Wall", "-Wextra", "-Werror", "-O2", "-ffp-contract=off"];

pub fn c_compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".to_string());
    Command::new(&cc).arg("--version").output().ok().filter(|o| o.status.success()).map(|_| cc)
}

/// Minimal file-driven driver: reads a TNNV input file, writes a TNNV output file.
pub fn driver_source(name: &str) -> String {
    let upper = name.to_ascii_uppercase();
    format!(
        r#"#include <stdio.h>
#include <string.h>
#include "{name}_model.h"

static float in_buf[{upper}_IN_SIZE];
static float out_buf[{upper}_OUT_SIZE];

static int read_u32(FILE *f, unsigned long *v)
{{
    unsigned char b[4];
    if (fread(b, 1, 4, f) != 4) return 1;
    *v = (unsigned long)b[0] | ((unsigned long)b[1] << 8) | ((unsigned long)b[2] << 16) | ((unsigned long)b[3] << 24);
    return 0;
}}

static void write_u32(FILE *f, unsigned long v)
{{
    unsigned char b[4];
    b[0] = (unsigned char)(v & 0xff);
    b[1] = (unsigned char)((v >> 8) & 0xff);
    b[2] = (unsigned char)((v >> 16) & 0xff);
    b[3] = (unsigned char)((v >> 24) & 0xff);
    fwrite(b, 1, 4, f);
}}

int main(int argc, char **argv)
{{
    FILE *in, *out;
    char magic[4];
    unsigned long count, length, n;
    if (argc < 3) return 1;
    in = fopen(argv[1], "rb");
    if (!in) return 1;
    if (fread(magic, 1, 4, in) != 4 || memcmp(magic, "TNNV", 4) != 0) return 1;
    if (read_u32(in, &count) || read_u32(in, &length)) return 1;
    if (count > 0 && length != {upper}_IN_SIZE) return 2;
    if ({name}_init() != 0) return 3;
    out = fopen(argv[2], "wb");
    if (!out) return 1;
    fwrite("TNNV", 1, 4, out);
    write_u32(out, count);
    write_u32(out, {upper}_OUT_SIZE);
    for (n = 0; n < count; ++n) {{
        if (fread(in_buf, 4, {upper}_IN_SIZE, in) != {upper}_IN_SIZE) return 1;
        if ({name}_run(in_buf, out_buf) != 0) return 3;
        fwrite(out_buf, 4, {upper}_OUT_SIZE, out);
    }}
    fclose(in);
    fclose(out);
    return 0;
}}
"#
    )
}

/// Writes the bundle and driver into `dir` and builds `dir/driver`.
pub fn build_driver(cc: &str, bundle: &GeneratedBundle, dir: &Path) -> Result<PathBuf, String> {
    bundle.write_to(dir).map_err(|e| e.to_string())?;
    let driver = dir.join("driver.c");
    std::fs::write(&driver, driver_source(&bundle.name)).map_err(|e| e.to_string())?;
    let exe = dir.join("driver");
    let output = Command::new(cc)
        .args(C_FLAGS)
        .arg("-I")
        .arg(dir)
        .arg(&driver)
        .arg(dir.join(bundle.source_file()))
        .arg(dir.join(bundle.weights_file()))
        .arg("-o")
        .arg(&exe)
        .arg("-lm")
        .output()
        .map_err(|e| e.to_string())?;
    if !output.status.success() {
        return Err(String::from_utf8_lossy(&output.stderr).into_owned());
    }
    Ok(exe)
}

pub fn run_driver(exe: &Path, input: &Path, output: &Path) -> i32 {
    Command::new(exe).arg(input).arg(output).status().expect("driver runs").code().unwrap_or(-1)
}
