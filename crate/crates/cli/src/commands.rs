use aquanomaly::evaluation::{cross_validate, stratified_subsample, CvReport, Metric};
use aquanomaly::features::{mutual_information_scores, rfe, write_scores_csv, RfeTarget};
use aquanomaly::models::{predict, TrainedClassifier};
use aquanomaly::resampling::resample;
use aquanomaly::stationarity::{adf_report, difference};
use aquanomaly::stream::point::rfc3339;
use aquanomaly::stream::score::model_channels;
use aquanomaly::stream::{httpout_json, points_from_frame, AnomalyAlert, StreamEngine, StreamScorer, StreamService};
use aquanomaly::synth::{generate, SynthSpec};
use aquanomaly::{fill_missing, parse_csv, ChannelId, Frame};

use crate::config::{Groups, Resolved};
use crate::run::{read, Run};
use crate::CliError;

type Out = Result<(), CliError>;

pub fn run(name: &str, groups: &Groups) -> Out {
    let res = groups.resolve(name)?;
    match name {
        "clean" => clean(&res, name),
        "adf" => adf(&res, name),
        "mi" => mi(&res, name),
        "train" => train(&res, name),
        "evaluate" => evaluate(&res, name),
        "resample-eval" => resample_eval(&res, name),
        "rfe" => run_rfe(&res, name),
        "serve" => serve(&res),
        "replay" => replay(&res, name),
        "score" => score(&res, name),
        "synth" => synth(&res, name),
        other => Err(CliError::usage(format!("unknown subcommand {other:?}"))),
    }
}

fn cleaned(res: &Resolved) -> Result<Frame, CliError> {
    let path = res
        .input
        .as_ref()
        .ok_or_else(|| CliError::usage("--input is required"))?;
    let raw: Frame = parse_csv(path, &ChannelId::ALL)?;
    Ok(fill_missing(&raw)?)
}

/// Cleaned, optionally differenced, then optionally subsampled.
fn prepared(res: &Resolved) -> Result<Frame, CliError> {
    let frame = cleaned(res)?;
    let frame = if res.difference {
        difference(&frame)?.into_frame()
    } else {
        frame
    };
    match res.subsample {
        Some(n) => {
            let idx = stratified_subsample(frame.labels(), n, res.seed);
            Ok(frame.select_rows(&idx)?)
        }
        None => Ok(frame),
    }
}

fn single_model(res: &Resolved) -> Result<aquanomaly::models::CostModelSpec, CliError> {
    match res.models.as_slice() {
        [m] => Ok(*m),
        _ => Err(CliError::usage("this subcommand takes exactly one model")),
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> aquanomaly::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn clean(res: &Resolved, name: &str) -> Out {
    let frame = cleaned(res)?;
    let mut run = Run::start(name, res)?;
    run.write("cleaned.csv", frame.to_csv_string()?.as_bytes())?;
    run.finish()
}

fn adf(res: &Resolved, name: &str) -> Out {
    let frame = prepared(res)?;
    let report = adf_report(&frame, None)?;
    let mut run = Run::start(name, res)?;
    run.write("adf.csv", &csv_bytes(|b| report.write_csv(b))?)?;
    run.finish()
}

fn mi(res: &Resolved, name: &str) -> Out {
    let frame = prepared(res)?;
    let scores = mutual_information_scores(&frame, frame.labels())?;
    let mut run = Run::start(name, res)?;
    run.write("mi.csv", &csv_bytes(|b| write_scores_csv(&scores, b))?)?;
    run.finish()
}

fn train(res: &Resolved, name: &str) -> Out {
    let spec = single_model(res)?;
    let frame = prepared(res)?;
    let (mut x, mut y) = (frame.feature_matrix(), frame.labels().to_vec());
    match res.resamplers.as_slice() {
        [] | [None] => {}
        [Some(rs)] => {
            let out = resample(&x, &y, rs)?;
            if let Some(w) = &out.warning {
                eprintln!("warning: {w}");
            }
            (x, y) = (out.x, out.y);
        }
        _ => return Err(CliError::usage("train takes at most one resampler")),
    }
    let model: TrainedClassifier<f64> = spec.fit(&x, &y, &frame.feature_names())?;
    let mut run = Run::start(name, res)?;
    run.write("model.json", model.to_json()?.as_bytes())?;
    run.finish()
}

fn summary_header(first: &str) -> String {
    let mut cols = vec![first.to_string()];
    for m in Metric::ALL {
        cols.push(m.name().to_string());
        cols.push(format!("{}_std", m.name()));
    }
    cols.join(",") + "\n"
}

fn summary_line(label: &str, report: &CvReport) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| x.to_string());
    let mut cols = vec![label.to_string()];
    for m in Metric::ALL {
        let s = report.summary_for(m);
        cols.push(fmt(s.mean));
        cols.push(fmt(s.std));
    }
    cols.join(",") + "\n"
}

/// Concatenates per-report long-format CSVs under one header.
fn folds_csv(reports: &[(String, CvReport)]) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    for (i, (label, r)) in reports.iter().enumerate() {
        let body = csv_bytes(|b| r.write_csv(b, label))?;
        let skip = if i == 0 {
            0
        } else {
            body.iter().position(|&c| c == b'\n').map_or(body.len(), |p| p + 1)
        };
        out.extend_from_slice(&body[skip..]);
    }
    Ok(out)
}

fn evaluate(res: &Resolved, name: &str) -> Out {
    let frame = prepared(res)?;
    let (x, names) = (frame.feature_matrix(), frame.feature_names());
    let mut reports = Vec::new();
    for spec in &res.models {
        let report = cross_validate(spec, None, &x, frame.labels(), &names, &res.cv)?;
        reports.push((spec.learner.name().to_string(), report));
    }
    let mut summary = summary_header("model");
    for (label, r) in &reports {
        summary.push_str(&summary_line(label, r));
    }
    let mut run = Run::start(name, res)?;
    run.write("evaluate_summary.csv", summary.as_bytes())?;
    run.write("evaluate_folds.csv", &folds_csv(&reports)?)?;
    run.finish()
}

fn resample_eval(res: &Resolved, name: &str) -> Out {
    let spec = single_model(res)?;
    let frame = prepared(res)?;
    let (x, names) = (frame.feature_matrix(), frame.feature_names());
    let mut reports = Vec::new();
    for rs in &res.resamplers {
        let report = cross_validate(&spec, rs.as_ref(), &x, frame.labels(), &names, &res.cv)?;
        let label = rs.map_or("none", |r| r.method.name());
        reports.push((label.to_string(), report));
    }
    let mut summary = summary_header("resampler");
    for (label, r) in &reports {
        summary.push_str(&summary_line(label, r));
    }
    let mut run = Run::start(name, res)?;
    run.write("resample_summary.csv", summary.as_bytes())?;
    run.write("resample_folds.csv", &folds_csv(&reports)?)?;
    run.finish()
}

fn run_rfe(res: &Resolved, name: &str) -> Out {
    let spec = single_model(res)?;
    let frame = prepared(res)?;
    let ranking = rfe(&spec, &frame, frame.labels(), res.rfe, &res.cv)?;
    let mut run = Run::start(name, res)?;
    run.write("rfe_ranking.csv", &csv_bytes(|b| ranking.write_ranking_csv(b))?)?;
    if res.rfe == RfeTarget::Scan {
        run.write("rfe_scan.csv", &csv_bytes(|b| ranking.write_scan_csv(b))?)?;
    }
    run.finish()
}

fn load_model(res: &Resolved) -> Result<Option<TrainedClassifier<f64>>, CliError> {
    match &res.model_file {
        None => Ok(None),
        Some(p) => {
            let text = String::from_utf8(read(p)?).map_err(|_| CliError::input("model file is not UTF-8"))?;
            Ok(Some(TrainedClassifier::from_json(&text)?))
        }
    }
}

fn service(res: &Resolved) -> Result<StreamService<f64>, CliError> {
    let engine = StreamEngine::new(res.task.clone(), ChannelId::ALL.to_vec())?.strict(res.strict);
    let scorer = load_model(res)?.map(StreamScorer::new).transpose()?;
    Ok(StreamService::new(engine, scorer))
}

fn alerts_jsonl(alerts: &[AnomalyAlert]) -> Vec<u8> {
    let mut out = String::new();
    for a in alerts {
        out.push_str(&serde_json::to_string(a).expect("alerts serialize"));
        out.push('\n');
    }
    out.into_bytes()
}

fn replay(res: &Resolved, name: &str) -> Out {
    let frame = cleaned(res)?;
    let mut svc = service(res)?;
    let mut windows = String::from("window_end,points,first,last\n");
    svc.replay(points_from_frame(&frame), |b| {
        let edge = |i: Option<&aquanomaly::stream::DataPoint>| i.map_or(String::new(), |p| rfc3339(p.timestamp));
        windows.push_str(&format!(
            "{},{},{},{}\n",
            rfc3339(b.window_end),
            b.points.len(),
            edge(b.points.first()),
            edge(b.points.last())
        ));
    })?;
    let mut run = Run::start(name, res)?;
    run.write("windows.csv", windows.as_bytes())?;
    let latest = svc
        .latest_json()
        .unwrap_or_else(|| httpout_json(&res.task.measurement, &ChannelId::ALL, &[]));
    run.write("latest_batch.json", latest.as_bytes())?;
    if res.model_file.is_some() {
        run.write("alerts.jsonl", &alerts_jsonl(svc.alerts()))?;
    }
    run.finish()
}

fn score(res: &Resolved, name: &str) -> Out {
    let model = load_model(res)?.ok_or_else(|| CliError::usage("--model-file is required"))?;
    let raw = cleaned(res)?;
    let channels = model_channels(&model)?;
    let features = raw.select_channels(&channels)?;
    let (features, offset) = if res.difference {
        (difference(&features)?.into_frame(), 1)
    } else {
        (features, 0)
    };
    let flags = predict(&model, &features.feature_matrix())?;
    let id = model.identifier();
    let alerts: Vec<AnomalyAlert> = flags
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| {
            let r = i + offset;
            AnomalyAlert {
                time: raw.timestamps()[r],
                values: raw
                    .channels()
                    .iter()
                    .enumerate()
                    .map(|(j, &c)| (c, raw.column_at(j)[r]))
                    .collect(),
                predicted: true,
                model: id.clone(),
            }
        })
        .collect();
    let mut run = Run::start(name, res)?;
    run.write("alerts.jsonl", &alerts_jsonl(&alerts))?;
    run.finish()
}

fn synth(res: &Resolved, name: &str) -> Out {
    let spec = SynthSpec {
        rows: res.rows,
        seed: res.seed,
        missing_rate: res.missing_rate,
        ..SynthSpec::default()
    };
    let frame: Frame = generate(&spec)?;
    let mut run = Run::start(name, res)?;
    run.write("synth.csv", frame.to_csv_string()?.as_bytes())?;
    run.finish()
}

fn serve(res: &Resolved) -> Out {
    let mut svc = service(res)?;
    let server = tiny_http::Server::http(&res.listen)
        .map_err(|e| CliError::input(format!("cannot listen on {}: {e}", res.listen)))?;
    eprintln!("listening on http://{}", res.listen);
    for mut request in server.incoming_requests() {
        let mut body = String::new();
        let reply = if request.as_reader().read_to_string(&mut body).is_err() {
            aquanomaly::stream::Response {
                status: 400,
                content_type: "application/json",
                body: r#"{"error":"request body is not UTF-8"}"#.into(),
            }
        } else {
            svc.route(request.method().as_str(), request.url(), &body)
        };
        let header = tiny_http::Header::from_bytes("Content-Type", reply.content_type).expect("static header");
        let response = tiny_http::Response::from_string(reply.body)
            .with_status_code(reply.status)
            .with_header(header);
        if let Err(e) = request.respond(response) {
            eprintln!("response failed: {e}");
        }
    }
    Ok(())
}
