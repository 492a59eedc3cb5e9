use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lfbp_core::{random_psf, BackprojArray, Dims5, Dtype, Image, PsfArray, Volume};
use tempfile::TempDir;

fn lfbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfbp")).args(args).output().expect("run lfbp")
}

fn lfbp_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfbp")).args(args).env(key, value).output().expect("run lfbp")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Dir(TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

fn write_psf(path: &Path, dims: [usize; 5], seed: u64) -> PsfArray {
    let h = random_psf(Dims5::from_array(dims).unwrap(), 0.6, seed).unwrap();
    h.save(path, Dtype::F64).unwrap();
    h
}

#[test]
fn transform_and_inverse_restore_the_file() {
    let d = Dir::new();
    write_psf(&d.path("h.lf5"), [9, 7, 3, 5, 2], 1);
    let o = lfbp(&["transform", &d.s("h.lf5"), &d.s("ht.lf5")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("(9,7,3,5,2)"));
    let o = lfbp(&["transform", "--inverse", &d.s("ht.lf5"), &d.s("back.lf5")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(d.path("h.lf5")).unwrap(), std::fs::read(d.path("back.lf5")).unwrap());
}

#[test]
fn corrupt_magic_is_a_format_error() {
    let d = Dir::new();
    write_psf(&d.path("h.lf5"), [5, 5, 3, 3, 1], 2);
    let mut bytes = std::fs::read(d.path("h.lf5")).unwrap();
    bytes[0] = b'Q';
    std::fs::write(d.path("bad.lf5"), bytes).unwrap();
    let o = lfbp(&["transform", &d.s("bad.lf5"), &d.s("out.lf5")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("FormatError"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    assert!(!d.path("out.lf5").exists());
}

#[test]
fn even_pixel_inverse_is_refused() {
    let d = Dir::new();
    BackprojArray::new(Dims5::new(6, 5, 3, 3, 1).unwrap(), 1.0).unwrap().save(d.path("ht.lf5"), Dtype::F64).unwrap();
    let o = lfbp(&["transform", "--inverse", &d.s("ht.lf5"), &d.s("h.lf5")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("EvenPixelDims"));
}

#[test]
fn verify_pass_and_negative_control() {
    let d = Dir::new();
    write_psf(&d.path("h.lf5"), [11, 9, 5, 3, 2], 3);
    let o = lfbp(&["verify", &d.s("h.lf5")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("PASS"));

    PsfArray::new(Dims5::new(7, 7, 3, 3, 2).unwrap(), 0.5).unwrap().save(d.path("c.lf5"), Dtype::F32).unwrap();
    assert!(lfbp(&["verify", &d.s("c.lf5")]).status.success());

    // a correct H' passes, one flipped element fails with its index
    assert!(lfbp(&["transform", &d.s("h.lf5"), &d.s("ht.lf5")]).status.success());
    assert!(lfbp(&["verify", &d.s("h.lf5"), "--ht", &d.s("ht.lf5")]).status.success());
    let ht = BackprojArray::load(d.path("ht.lf5")).unwrap();
    let mut data = ht.data().to_vec();
    data[100] += 1.0;
    BackprojArray::from_vec(ht.dims(), data).unwrap().save(d.path("bad.lf5"), Dtype::F64).unwrap();
    let o = lfbp(&["verify", &d.s("h.lf5"), "--ht", &d.s("bad.lf5")]);
    assert_eq!(o.status.code(), Some(1));
    let [s, t, x, y, z] = ht.dims().index_of(100).unwrap();
    assert!(stdout(&o).starts_with("FAIL"));
    assert!(stdout(&o).contains(&format!("({s},{t},{x},{y},{z}) offset 100")), "{}", stdout(&o));
}

#[test]
fn synth_layouts_and_seed_determinism() {
    let d = Dir::new();
    for (layout, dims) in [("rect", "13,13,2"), ("hex", "13,15,2"), ("hex3", "21,21,2")] {
        let out = d.s(&format!("{layout}.lf5"));
        let o = lfbp(&["synth", "--layout", layout, "--dims", dims, &out]);
        assert!(o.status.success(), "{layout}: {}", stderr(&o));
        assert!(stderr(&o).contains("max |pattern sum - 1|"));
        assert!(lfbp(&["verify", &out]).status.success());
    }
    let h = PsfArray::load(d.path("hex3.lf5")).unwrap();
    assert_eq!(h.dims().to_array(), [21, 21, 15, 9, 2]);

    let run = |seed: &str, name: &str| {
        let o = lfbp(&["synth", "--layout", "random", "--dims", "9,9,3,3,2", "--seed", seed, &d.s(name)]);
        assert!(o.status.success());
        std::fs::read(d.path(name)).unwrap()
    };
    assert_eq!(run("5", "a.lf5"), run("5", "b.lf5"));
    assert_ne!(run("5", "a.lf5"), run("6", "c.lf5"));

    let o = lfbp(&["synth", "--layout", "hex", "--dims", "13,13,5,5,2", &d.s("x.lf5")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("LayoutMismatch"), "{}", stderr(&o));
}

#[test]
fn project_zero_volume_and_adjoint_check() {
    let d = Dir::new();
    write_psf(&d.path("h.lf5"), [9, 9, 3, 3, 2], 4);
    Volume::zeros(15, 15, 2).save(d.path("g.lf5"), Dtype::F64).unwrap();
    let o = lfbp(&["project", "--forward", &d.s("h.lf5"), &d.s("g.lf5"), &d.s("f.lf5")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = Image::load(d.path("f.lf5")).unwrap();
    assert_eq!(f.shape(), [15, 15]);
    assert!(f.data().iter().all(|&v| v == 0.0));

    let o = lfbp(&["project", "--backward", &d.s("h.lf5"), &d.s("f.lf5"), &d.s("b.lf5")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(Volume::load(d.path("b.lf5")).unwrap().shape(), [15, 15, 2]);

    let o = lfbp(&["project", "--forward", "--check-adjoint", &d.s("h.lf5"), &d.s("g.lf5")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o).lines().find(|l| l.starts_with("relative error")).unwrap().to_string();
    let rel: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
    assert!(rel < 1e-10);

    let o = lfbp(&["project", &d.s("h.lf5"), &d.s("g.lf5"), &d.s("x.lf5")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_voxel_stamps_its_pattern() {
    let d = Dir::new();
    let h = write_psf(&d.path("h.lf5"), [5, 5, 3, 3, 1], 5);
    let mut g = Volume::zeros(11, 11, 1);
    g.set(6, 5, 1, 1.0);
    g.save(d.path("g.lf5"), Dtype::F64).unwrap();
    assert!(lfbp(&["project", "--forward", &d.s("h.lf5"), &d.s("g.lf5"), &d.s("f.lf5")]).status.success());
    let f = Image::load(d.path("f.lf5")).unwrap();
    // voxel (6, 5) has phase (3, 2); its pattern is centred on pixel (6, 5)
    for t in 1..=5 {
        for s in 1..=5 {
            assert_eq!(f.get(6 + s - 3, 5 + t - 3), h.get(s, t, 3, 2, 1));
        }
    }
}

#[test]
fn deconv_recovers_two_points_and_zero_stays_zero() {
    let d = Dir::new();
    assert!(lfbp(&["synth", "--layout", "rect", "--dims", "17,17,3", &d.s("h.lf5")]).status.success());
    let mut g = Volume::zeros(31, 31, 3);
    g.set(9, 11, 2, 1.0);
    g.set(22, 20, 3, 1.0);
    g.save(d.path("g.lf5"), Dtype::F64).unwrap();
    assert!(lfbp(&["project", "--forward", &d.s("h.lf5"), &d.s("g.lf5"), &d.s("f.lf5")]).status.success());
    let o = lfbp(&["deconv", &d.s("h.lf5"), &d.s("f.lf5"), &d.s("est.lf5"), "--iters", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let errors: Vec<f64> = stdout(&o).lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(errors.len(), 21);
    assert!(errors.windows(2).all(|w| w[1] <= w[0]));
    let est = Volume::load(d.path("est.lf5")).unwrap();
    let mut order: Vec<usize> = (0..est.data().len()).collect();
    order.sort_by(|&a, &b| est.data()[b].total_cmp(&est.data()[a]));
    let mut top = vec![est.coords(order[0]), est.coords(order[1])];
    top.sort_unstable();
    assert_eq!(top, vec![(9, 11, 2), (22, 20, 3)]);

    Image::zeros(31, 31).save(d.path("zero.lf5"), Dtype::F64).unwrap();
    assert!(lfbp(&["deconv", &d.s("h.lf5"), &d.s("zero.lf5"), &d.s("z.lf5"), "--iters", "3"]).status.success());
    assert!(Volume::load(d.path("z.lf5")).unwrap().data().iter().all(|&v| v == 0.0));
}

fn pgm_pixels(bytes: &[u8]) -> (String, Vec<u16>) {
    // header is three newline-terminated lines
    let mut newlines = 0;
    let end = bytes
        .iter()
        .position(|&b| {
            newlines += (b == b'\n') as usize;
            newlines == 3
        })
        .unwrap();
    let header = String::from_utf8(bytes[..=end].to_vec()).unwrap();
    let pixels = bytes[end + 1..].chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    (header, pixels)
}

#[test]
fn export_sums_show_the_rotation() {
    let d = Dir::new();
    write_psf(&d.path("h.lf5"), [9, 7, 3, 3, 2], 6);
    assert!(lfbp(&["transform", &d.s("h.lf5"), &d.s("ht.lf5")]).status.success());
    let o = lfbp(&["export", "--plane", "2", "--sum-forward", &d.s("h.lf5"), &d.s("fw.pgm")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(lfbp(&["export", "--plane", "2", "--sum-backward", &d.s("ht.lf5"), &d.s("bw.pgm")]).status.success());
    let (hf, fw) = pgm_pixels(&std::fs::read(d.path("fw.pgm")).unwrap());
    let (hb, bw) = pgm_pixels(&std::fs::read(d.path("bw.pgm")).unwrap());
    assert_eq!(hf, "P5\n7 9\n65535\n");
    assert_eq!(hf, hb);
    assert_eq!(fw.len(), 63);
    assert!(fw.contains(&65535));
    let reversed: Vec<u16> = fw.iter().rev().copied().collect();
    assert_eq!(bw, reversed);

    Image::zeros(4, 3).save(d.path("z.lf5"), Dtype::F64).unwrap();
    assert!(lfbp(&["export", &d.s("z.lf5"), &d.s("z.pgm")]).status.success());
    let (h, px) = pgm_pixels(&std::fs::read(d.path("z.pgm")).unwrap());
    assert_eq!(h, "P5\n3 4\n65535\n");
    assert!(px.iter().all(|&v| v == 0));

    let o = lfbp(&["export", "--plane", "3", "--sum-forward", &d.s("h.lf5"), &d.s("x.pgm")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("IndexError"));
}

#[test]
fn bench_writes_csv() {
    let d = Dir::new();
    let o = lfbp(&["bench", "--sizes", "smoke", "--repeats", "3", &d.s("b.csv")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("oracle"));
    let csv = std::fs::read_to_string(d.path("b.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n_s,n_t,n_x,n_y,n_z,fast_s,oracle_s,speedup,verified"));
    assert!(lines.all(|l| l.ends_with(",true")));

    std::fs::write(d.path("sizes.txt"), "# two cases\n9 9 3 3 1\n11,9,5,3,2\n").unwrap();
    let o = lfbp(&["bench", "--sizes", &d.s("sizes.txt"), "--repeats", "3", &d.s("c.csv")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(d.path("c.csv")).unwrap().lines().count(), 3);

    let o = lfbp(&["bench", "--sizes", "smoke", "--repeats", "2", &d.s("e.csv")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_and_thread_settings() {
    let d = Dir::new();
    assert!(lfbp(&["synth", "--layout", "rect", "--dims", "13,13,2", &d.s("h.lf5")]).status.success());
    Image::filled(15, 15, 1.0).save(d.path("f.lf5"), Dtype::F64).unwrap();
    std::fs::write(d.path("lfbp.conf"), "# defaults\niters = 3\nthreads = 1\n").unwrap();
    let o = lfbp(&["--config", &d.s("lfbp.conf"), "deconv", &d.s("h.lf5"), &d.s("f.lf5"), &d.s("g.lf5")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1 + 4);

    // the flag wins over the file
    let o = lfbp(&["deconv", "--config", &d.s("lfbp.conf"), &d.s("h.lf5"), &d.s("f.lf5"), &d.s("g.lf5"), "--iters", "1"]);
    assert_eq!(stdout(&o).lines().count(), 1 + 2);

    std::fs::write(d.path("bad.conf"), "iters three\n").unwrap();
    let o = lfbp(&["--config", &d.s("bad.conf"), "verify", &d.s("h.lf5")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ConfigError"), "{}", stderr(&o));

    assert!(lfbp_env(&["verify", &d.s("h.lf5")], "LFBP_THREADS", "2").status.success());
    assert_eq!(lfbp_env(&["verify", &d.s("h.lf5")], "LFBP_THREADS", "many").status.code(), Some(2));
}
