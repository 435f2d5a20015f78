use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semibandit::config::LoadedEnvConfig;
use semibandit::envs::{block_covariance, empirical_mgf, load_transactions, Environment, TransactionTable};
use semibandit::{ActionSpace, Error};

const TEN_LINES: &str = "milk,bread\nbread\nmilk,eggs,bread\neggs\nmilk\nbread,jam\nmilk,bread\njam\nbread\nmilk,eggs\n";

fn write_temp(bytes: &[u8]) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(bytes).unwrap();
    f
}

#[test]
fn assortment_means_match_hand_count() {
    let f = write_temp(TEN_LINES.as_bytes());
    let table = load_transactions(f.path()).unwrap();
    assert_eq!(table.items(), ["milk", "bread", "eggs", "jam"]);
    // milk 5, bread 6, eggs 3, jam 2 out of 10.
    let counts = [5.0, 6.0, 3.0, 2.0];
    let env = Environment::assortment(Arc::new(table), 1.5, 0.1, None).unwrap();
    for (mu, c) in env.instance().mu_star().iter().zip(counts) {
        let q: f64 = c / 10.0;
        assert!((mu - (1.4 * q - 0.1 * (1.0 - q))).abs() < 1e-15);
    }
    // milk and bread together on lines 1, 3 and 7.
    let sigma = env.instance().sigma_star().unwrap();
    assert!((sigma[1] - 2.25 * (0.3 - 0.5 * 0.6)).abs() < 1e-15);
    assert_eq!(env.instance().optimal_action().arms(), &[0, 1, 2, 3]);
}

#[test]
fn serialized_table_roundtrips() {
    let table = TransactionTable::from_transactions(&[vec!["a", "b"], vec!["c"], vec!["b", "a", "b"]]).unwrap();
    let mut buf = Vec::new();
    table.write(&mut buf).unwrap();
    let f = write_temp(&buf);
    let back = load_transactions(f.path()).unwrap();
    assert_eq!(back.frequencies(), table.frequencies());
    assert_eq!(back.items(), table.items());
}

#[test]
fn blank_lines_are_skipped_and_counted() {
    let f = write_temp(b"a,b\n\n  \nb\n");
    let table = load_transactions(f.path()).unwrap();
    assert_eq!(table.len(), 2);
    assert_eq!(table.skipped_lines(), 2);
}

#[test]
fn invalid_utf8_reports_line() {
    let f = write_temp(b"a,b\nc,\xff\xfe\n");
    match load_transactions(f.path()) {
        Err(Error::TransactionLine { line, .. }) => assert_eq!(line, 2),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn empty_file_is_rejected() {
    let f = write_temp(b"");
    assert!(matches!(load_transactions(f.path()), Err(Error::Transactions { .. })));
}

#[test]
fn assortment_config_resolves_relative_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tx.csv"), TEN_LINES).unwrap();
    std::fs::write(dir.path().join("env.toml"), "kind = \"assortment\"\ntransactions = \"tx.csv\"\nm = 2\n").unwrap();
    let env = LoadedEnvConfig::from_file(dir.path().join("env.toml")).unwrap().build().unwrap();
    assert_eq!(env.n(), 4);
    assert_eq!(env.instance().m(), 2);
}

#[test]
fn gaussian_sample_covariance_matches() {
    let sigma = block_covariance(4, 2, 1.0, 0.4);
    let mut sigma = sigma;
    sigma[2] = -0.3;
    sigma[8] = -0.3;
    let mu = vec![0.5, -0.2, 0.1, 0.0];
    let env = Environment::gaussian(ActionSpace::partition(4, 2).unwrap(), mu.clone(), sigma.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 100_000;
    let xs: Vec<Vec<f64>> = (0..draws).map(|_| env.sample(&mut rng)).collect();
    let k = draws as f64;
    for i in 0..4 {
        let mean_i = xs.iter().map(|x| x[i]).sum::<f64>() / k;
        assert!((mean_i - mu[i]).abs() <= 5.0 * (sigma[i * 4 + i] / k).sqrt());
        for j in 0..4 {
            let mean_j = xs.iter().map(|x| x[j]).sum::<f64>() / k;
            let prods: Vec<f64> = xs.iter().map(|x| (x[i] - mean_i) * (x[j] - mean_j)).collect();
            let c = prods.iter().sum::<f64>() / k;
            let var = prods.iter().map(|p| (p - c) * (p - c)).sum::<f64>() / (k - 1.0);
            let se = (var / k).sqrt();
            assert!((c - sigma[i * 4 + j]).abs() <= 5.0 * se, "({i},{j}): {c} vs {}", sigma[i * 4 + j]);
        }
    }
}

#[test]
fn multinomial_outcomes_are_scaled_counts() {
    let env = Environment::multinomial_sparse(ActionSpace::uniform_matroid(3, 2).unwrap(), vec![0.5, 0.3, 0.2], 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let x = env.sample(&mut rng);
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(x.iter().all(|v| (v * 3.0 - (v * 3.0).round()).abs() < 1e-12));
    }
}

#[test]
fn bounded_envs_satisfy_the_mgf_bound() {
    let env = Environment::thm3(8, 4, 2, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (arm, lambda) in [(0, 2.0), (3, -3.0), (5, 1.0)] {
        let s = empirical_mgf(&env, arm, lambda, 100_000, &mut rng);
        assert!(s.within(5.0), "{s:?}");
    }
}

#[test]
fn thm1_rejects_mismatched_partition() {
    assert!(Environment::thm1(5, 2, block_covariance(5, 2, 1.0, 0.0), 0.2).is_err());
}
