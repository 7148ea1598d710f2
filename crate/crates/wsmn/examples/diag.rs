use wsmn::embed::*;
use wsmn::image::*;
use wsmn::marks::*;
use wsmn::synth::*;
use wsmn::transforms::*;
use wsmn::extract::*;
use wsmn::metrics;

fn run(name: &str, ddp: f64, attack: Option<&str>, sys: &ShearletSystem) {
    let img = synth_image(name, 512, 7);
    let plane = luminance(&img).unwrap();
    let grid = partition(512, 512, 8).unwrap();
    let keys = KeySet { key1: 0x11112222, key2: 0x33334444, key3: 0x55556666 };
    let logo = gen_binary_sequence(99, 32, 32);
    let marks = prepare_marks(&logo, &keys, 512, 512, 8).unwrap();
    let tex = wsmn::texture::analyze(&plane, &grid, 8, 13).unwrap();
    let thresholds = ThresholdPair { delta_prime: 40.0, delta_dprime: ddp };
    let t0 = std::time::Instant::now();
    let wm = embed_all_with_system(sys, &img, &marks, &tex, &thresholds, Mode::Dual).unwrap();
    let embed_time = t0.elapsed();
    let psnr = metrics::psnr(&img, &wm).unwrap().unwrap();
    let ssim = metrics::ssim(&img, &wm).unwrap();

    let received = match attack {
        None => wm.clone(),
        Some("jpeg70") => wsmn::attacks::apply_attack(&wm, &wsmn::attacks::AttackSpec::new(wsmn::attacks::AttackKind::Jpeg { quality: 70 }, 0)).unwrap(),
        Some("darksharp") => {
            let a = wsmn::attacks::apply_attack(&wm, &wsmn::attacks::AttackSpec::new(wsmn::attacks::AttackKind::Darken { step: 50 }, 0)).unwrap();
            wsmn::attacks::apply_attack(&a, &wsmn::attacks::AttackSpec::new(wsmn::attacks::AttackKind::Sharpen { radius: 1.0, amount: 4.0 }, 0)).unwrap()
        }
        Some("median") => wsmn::attacks::apply_attack(&wm, &wsmn::attacks::AttackSpec::new(wsmn::attacks::AttackKind::Median3x3, 0)).unwrap(),
        Some("histeq") => wsmn::attacks::apply_attack(&wm, &wsmn::attacks::AttackSpec::new(wsmn::attacks::AttackKind::HistogramEqualization, 0)).unwrap(),
        Some("jpeg40") => wsmn::attacks::apply_attack(&wm, &wsmn::attacks::AttackSpec::new(wsmn::attacks::AttackKind::Jpeg { quality: 40 }, 0)).unwrap(),
        Some("sp05") => wsmn::attacks::apply_attack(&wm, &wsmn::attacks::AttackSpec::new(wsmn::attacks::AttackKind::SaltPepper { density: 0.05 }, 3)).unwrap(),
        _ => unreachable!(),
    };
    let rplane = luminance(&received).unwrap();

    let ext = extract_copyright_with_system(sys, &rplane, &keys, 8, 40.0).unwrap();
    let logo_ber = metrics::ber(&marks.logo, &ext.logo).unwrap();
    let logo_nc = metrics::nc(&marks.logo, &ext.logo).unwrap();

    let cfg = MlpConfig { max_epochs: 300, ..MlpConfig::default() };
    let t1 = std::time::Instant::now();
    let (extr, trained) = extract_auth(sys, &rplane, &keys, 8, 29, &cfg).unwrap();
    let train_time = t1.elapsed();
    let auth_ber = metrics::ber(&marks.auth, &extr).unwrap();
    let auth_nc = metrics::nc(&marks.auth, &extr).unwrap();
    println!("{name:8} ddp {ddp} {:9}: PSNR {psnr:6.2} SSIM {ssim:.3} | cBER {logo_ber:.4} cNC {logo_nc:.3} | aBER {auth_ber:.4} aNC {auth_nc:.3} folds {:?} | embed {embed_time:.0?} train {train_time:.0?}",
        attack.unwrap_or("clean"), trained.fold_errors.iter().map(|v| (v*1000.0).round()/1000.0).collect::<Vec<_>>());
}

fn main() {
    let sys = ShearletSystem::new(512, 512).unwrap();
    for ddp in [0.5, 1.0, 2.0] { run("lena", ddp, None, &sys); }
    run("lena", 1.0, Some("jpeg70"), &sys);
    run("lena", 1.0, Some("darksharp"), &sys);
    run("lena", 1.0, Some("median"), &sys);
    run("lena", 1.0, Some("histeq"), &sys);
    run("lena", 1.0, Some("jpeg40"), &sys);
    run("lena", 1.0, Some("sp05"), &sys);
    run("baboon", 1.0, None, &sys);
    run("camera", 1.0, None, &sys);
}
