//! Coarse (U, W) preview of k and fast flux for a cross-section file.
//!
//! cargo run --release --example scan_preview -- [xs.json] [n_u] [n_w] [particles]

use std::path::PathBuf;
use std::time::Instant;

use mtrbench::model::{build_unit_cell, Bounds, GeometryConfig, ParamPoint};
use mtrbench::transport::{run_keig, McConfig};
use mtrbench::xslib::{default_library_path, XsLibrary};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).filter(|s| *s != "-").map(PathBuf::from).unwrap_or_else(default_library_path);
    let n_u: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(10);
    let n_w: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(10);
    let particles: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let lib = XsLibrary::from_file(&path).expect("library");
    let b = Bounds::default();
    let geom = GeometryConfig::default();
    let mc = McConfig { particles_per_batch: particles, n_batches: 30, n_inactive: 5, seed: 7 };
    let us: Vec<f64> = (0..n_u).map(|i| b.u_min + (b.u_max - b.u_min) * i as f64 / (n_u - 1) as f64).collect();
    let ws: Vec<f64> = match std::env::var("W_LIST") {
        Ok(list) => list.split(',').map(|v| v.parse().unwrap()).collect(),
        Err(_) => (0..n_w).map(|i| b.w_min + (b.w_max - b.w_min) * i as f64 / (n_w - 1) as f64).collect(),
    };
    let n_w = ws.len();
    let t0 = Instant::now();
    let mut k = vec![vec![0.0; n_u]; n_w];
    let mut phi = vec![vec![0.0; n_u]; n_w];
    for (j, &w) in ws.iter().enumerate() {
        for (i, &u) in us.iter().enumerate() {
            let m = build_unit_cell(&geom, &b, ParamPoint::new(u, w), &lib).unwrap();
            let r = run_keig(&m, &mc).unwrap();
            k[j][i] = r.k_mean;
            phi[j][i] = r.fast_flux;
        }
    }
    if let Ok(out) = std::env::var("CSV_OUT") {
        let mut text = String::from("u,w,k,flux\n");
        for (j, w) in ws.iter().enumerate() {
            for (i, u) in us.iter().enumerate() {
                text += &format!("{u},{w},{},{}\n", k[j][i], phi[j][i]);
            }
        }
        std::fs::write(out, text).unwrap();
    }
    let per = t0.elapsed().as_secs_f64() / (n_u * n_w) as f64;
    print!("   W \\ U ");
    for u in &us { print!("{u:6.1}"); }
    println!("\nk:");
    for (j, w) in ws.iter().enumerate().rev() {
        print!("{w:8.3} ");
        for i in 0..n_u {
            let c = if (k[j][i] - 1.0).abs() <= 0.05 { '*' } else { ' ' };
            print!("{:5.2}{c}", k[j][i]);
        }
        println!();
    }
    println!("fast flux:");
    for (j, w) in ws.iter().enumerate().rev() {
        print!("{w:8.3} ");
        for i in 0..n_u { print!("{:6.3}", phi[j][i]); }
        println!();
    }
    println!("fitness:");
    for (j, w) in ws.iter().enumerate().rev() {
        print!("{w:8.3} ");
        for i in 0..n_u { print!("{:6.3}", ((k[j][i] - 1.0f64).abs() + 1.0) / (phi[j][i] + 1.0)); }
        println!();
    }
    eprintln!("{per:.4} s per point at {particles} x 30");
}
