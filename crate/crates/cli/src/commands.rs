use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use siamzero::dataio::{
    load_manifest, load_normalized, load_pgm, parse_manifest, read_feature_matrix, save_manifest,
    save_normalized, write_feature_matrix, Manifest, ManifestEntry,
};
use siamzero::evalsuite::{
    error_report, evaluate, history_csv, split_charset, train, Corpus, SplitSpec,
};
use siamzero::matcher::{build_template_matrix, classify, classify_restricted, TemplateMatrix};
use siamzero::pairs::generate_pairs;
use siamzero::prep::{preprocess, NormalizedImage};
use siamzero::selfcheck::{component_suites, worst, TOL};
use siamzero::siamese::build_model;
use siamzero::toygen::{generate_fixture, write_fixture, ToyConfig};
use siamzero::{Error, Model32, Result};

use crate::config::Config;

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(text: &str) {
    print!("{text}");
    let _ = std::io::stdout().flush();
}

fn split_for(cfg: &Config, corpus: &Corpus) -> Result<SplitSpec> {
    let ids = corpus.class_ids();
    match cfg.c_seen {
        Some(c) if c < ids.len() => split_charset(&ids, c, cfg.train.seed),
        Some(c) if c > ids.len() => Err(Error::SplitOutOfRange {
            c_seen: c,
            classes: ids.len(),
        }),
        _ => Ok(SplitSpec::closed(&ids)),
    }
}

fn load_image(path: &Path, threshold: u8) -> Result<NormalizedImage> {
    if path.extension().is_some_and(|e| e == "szim") {
        load_normalized(path)
    } else {
        preprocess(&load_pgm(path)?, threshold)
    }
}

/// Template features from a `.szfm` file, or embedded from a template manifest.
fn template_matrix(
    model: &Model32,
    templates: &Path,
    threshold: u8,
) -> Result<TemplateMatrix<f32>> {
    if templates.extension().is_some_and(|e| e == "szfm") {
        return read_feature_matrix(templates);
    }
    let manifest = load_manifest(templates, false)?;
    let images = manifest
        .entries
        .iter()
        .map(|e| Ok((e.class_id, load_image(&manifest.resolve(e), threshold)?)))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<(u32, &NormalizedImage)> = images.iter().map(|(c, i)| (*c, i)).collect();
    build_template_matrix(model, &refs)
}

pub fn prep(cfg: &Config, input: &Path, manifest: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let m = parse_manifest(&text, input, manifest, false)?;
    let mut entries = Vec::with_capacity(m.entries.len());
    for e in &m.entries {
        let img = preprocess(&load_pgm(m.resolve(e))?, cfg.threshold)?;
        let rel = Path::new(&e.path).with_extension("szim");
        let dest = out.join(&rel);
        if let Some(dir) = dest.parent() {
            fs::create_dir_all(dir).map_err(|err| Error::io(dir, err))?;
        }
        save_normalized(&img, &dest)?;
        entries.push(ManifestEntry {
            path: rel.to_string_lossy().into_owned(),
            class_id: e.class_id,
        });
    }
    let count = entries.len();
    save_manifest(&Manifest::new(out, entries), out.join("manifest.tsv"))?;
    log::info!("normalized {count} images into {}", out.display());
    Ok(())
}

pub fn pairs(cfg: &Config, manifest: &Path, out: Option<&Path>) -> Result<()> {
    let m = load_manifest(manifest, false)?;
    let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
    for e in &m.entries {
        *sizes.entry(e.class_id).or_default() += 1;
    }
    let classes: Vec<(u32, usize)> = sizes.into_iter().collect();
    let list = generate_pairs(&classes, cfg.train.n, cfg.train.seed)?;
    let (pos, neg) = list.label_counts();
    log::info!(
        "{pos} positive and {neg} negative pairs over {} classes",
        classes.len()
    );
    match out {
        Some(path) => list.write(path),
        None => {
            emit(&list.to_tsv());
            Ok(())
        }
    }
}

pub fn train_cmd(cfg: &Config, data: &Path, checkpoint: &Path) -> Result<()> {
    let corpus = Corpus::load_dir(data, cfg.test_fraction, cfg.threshold)?;
    let split = split_for(cfg, &corpus)?;
    log::info!(
        "{} seen and {} unseen classes",
        split.seen.len(),
        split.unseen.len()
    );
    let mut model = build_model::<f32>(&cfg.arch, cfg.train.seed)?;
    let outcome = train(&mut model, &corpus, &split, &cfg.train)?;
    log::info!("keeping weights of epoch {}", outcome.kept_epoch);
    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    model.save(checkpoint)?;
    let csv = history_csv(&outcome.history);
    match &cfg.history {
        Some(path) => write_file(path, &csv)?,
        None => emit(&csv),
    }
    let report = evaluate(&model, &corpus, &split)?;
    if let Some(path) = &cfg.report {
        write_file(path, &report.to_tsv())?;
    }
    emit(&report.to_tsv());
    Ok(())
}

pub fn eval(cfg: &Config, data: &Path, checkpoint: &Path, errors: Option<usize>) -> Result<()> {
    let corpus = Corpus::load_dir(data, cfg.test_fraction, cfg.threshold)?;
    let split = split_for(cfg, &corpus)?;
    let model = Model32::load(checkpoint, &cfg.arch)?;
    let report = evaluate(&model, &corpus, &split)?;
    if let Some(path) = &cfg.report {
        write_file(path, &report.to_tsv())?;
    }
    emit(&report.to_tsv());
    if let Some(k) = errors {
        let mut out = String::from("rank\ttruth\tpredicted\tcount\texemplar\n");
        for (i, cell) in error_report(&report, k).iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                i + 1,
                cell.truth,
                cell.predicted,
                cell.count,
                cell.exemplar
            ));
        }
        emit(&out);
    }
    Ok(())
}

pub fn classify_cmd(
    cfg: &Config,
    checkpoint: &Path,
    templates: &Path,
    image: &Path,
    restrict: Option<&[u32]>,
) -> Result<()> {
    let model = Model32::load(checkpoint, &cfg.arch)?;
    let matrix = template_matrix(&model, templates, cfg.threshold)?;
    let query = load_image(image, cfg.threshold)?;
    let feature = model.embed(&query.to_tensor())?;
    let prediction = match restrict {
        Some(ids) => {
            let allowed: BTreeSet<u32> = ids.iter().copied().collect();
            classify_restricted(feature.data(), &matrix, &model.head, &allowed)?
        }
        None => classify(feature.data(), &matrix, &model.head)?,
    };
    emit(&format!(
        "{}\t{}\n",
        prediction.class_id, prediction.probability
    ));
    Ok(())
}

pub fn export_features(
    cfg: &Config,
    checkpoint: &Path,
    templates: &Path,
    out: &Path,
) -> Result<()> {
    let model = Model32::load(checkpoint, &cfg.arch)?;
    let matrix = template_matrix(&model, templates, cfg.threshold)?;
    write_feature_matrix(&matrix, out)?;
    log::info!(
        "wrote {} template features to {}",
        matrix.rows(),
        out.display()
    );
    Ok(())
}

/// Prints the worst relative error of each operator suite; `Ok(false)` when
/// any exceeds the tolerance.
pub fn gradcheck() -> bool {
    let mut all = true;
    let mut out = String::from("op\tmax_rel_error\tworst_case\tresult\n");
    for (op, reports) in component_suites() {
        let (name, r) = worst(&reports);
        let pass = r.passes(TOL);
        all &= pass;
        out.push_str(&format!(
            "{op}\t{:.3e}\t{name}\t{}\n",
            r.max_rel_error,
            if pass { "pass" } else { "fail" }
        ));
    }
    emit(&out);
    all
}

pub fn gen_toy(
    cfg: &Config,
    classes: usize,
    samples: usize,
    complexity: usize,
    out: &PathBuf,
) -> Result<()> {
    let toy = ToyConfig {
        classes,
        samples,
        complexity,
        seed: cfg.train.seed,
        ..ToyConfig::default()
    };
    let fixture = generate_fixture(&toy)?;
    write_fixture(&fixture, out)?;
    log::info!(
        "wrote {classes} classes x {samples} samples plus templates to {}",
        out.display()
    );
    Ok(())
}
