//! The `ler` command-line tool.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use ler_core::canon;
use ler_core::clock::{Clock, SystemClock};
use ler_core::credential::{
    CredentialClass, DisclosurePolicy, PresentationRequest, VerifiableCredential,
    VerifiablePresentation,
};
use ler_core::fixtures;
use ler_core::identity::Did;
use ler_core::matching::{
    estimate_boi, AuditMatcher, BernoulliInstitution, ClaimedSkill, InstitutionBump,
    JobRequirement, RandomProfileEdits, SkillMatcher, SkillNormalizer, SkillOnly,
};
use ler_core::protocol::Challenge;
use ler_core::skills::Transcript;
use rand::rngs::OsRng;
use serde::Serialize;

use crate::config::Config;
use crate::node::{
    load_json, read_syllabi, save_json, HolderNode, IssuanceBundle, IssuerNode, Layout, Role,
    VerifierNode,
};
use crate::service::{self, Services};
use crate::GatewayError;

#[derive(Debug, Parser)]
#[command(name = "ler", version, about = "Learning and employment record credentials")]
pub struct Cli {
    /// Config file (canonical JSON). Overrides LER_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Canonical,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the key pair for a role (kept if it already exists).
    Keygen {
        #[arg(long, value_enum)]
        role: Role,
        /// Replace an existing key.
        #[arg(long)]
        force: bool,
    },
    #[command(subcommand)]
    /// Register or show DID documents
    Did(DidCommand),
    /// Issue a transcript credential to a holder.
    Issue {
        #[arg(long)]
        transcript: PathBuf,
        /// Holder DID; defaults to the local holder.
        #[arg(long)]
        holder: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive a skill credential from a transcript and syllabi.
    Derive {
        #[arg(long)]
        transcript: PathBuf,
        /// Directory with one syllabus text file per course id.
        #[arg(long)]
        syllabi: PathBuf,
        /// Tab-separated taxonomy; defaults to the configured one.
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    /// Holder wallet: list, import, disclosure policy
    Wallet(WalletCommand),
    /// Verifier: issue a challenge for a job.
    Challenge {
        #[arg(long)]
        job: Option<PathBuf>,
        /// Requested claim keys; `skill.*` style prefixes allowed.
        #[arg(long = "claim", default_values_t = ["taxonomy".to_string(), "skill.*".to_string()])]
        claims: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Holder: answer a challenge with a presentation.
    Present {
        #[arg(long)]
        challenge: PathBuf,
        #[arg(long)]
        credential: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verifier: check a presentation and match it against the job.
    Verify {
        #[arg(long)]
        presentation: PathBuf,
        /// Job to match; defaults to the one attached to the challenge.
        #[arg(long)]
        job: Option<PathBuf>,
    },
    /// Score skills against a job without verification.
    Match {
        #[arg(long)]
        job: PathBuf,
        /// Derivative credential file whose skills to score.
        #[arg(long)]
        credential: Option<PathBuf>,
        #[arg(long = "skill")]
        skills: Vec<String>,
    },
    /// Revoke a credential: on the issuer list, or the holder's own
    /// derivative list with --derivative.
    Revoke {
        credential_id: String,
        #[arg(long)]
        derivative: bool,
    },
    #[command(subcommand)]
    /// Bias audits of a matcher
    Audit(AuditCommand),
    /// Run a node's HTTP endpoints.
    Serve {
        #[arg(value_enum)]
        role: Role,
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DidCommand {
    /// Register the role's DID document in the registry.
    Register {
        #[arg(long, value_enum)]
        role: Role,
    },
    /// Print a DID document.
    Show {
        #[arg(long, value_enum, conflicts_with = "did")]
        role: Option<Role>,
        #[arg(long)]
        did: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum WalletCommand {
    List,
    /// Import an issuance bundle.
    Import { file: PathBuf },
    #[command(subcommand)]
    Policy(PolicyCommand),
}

#[derive(Debug, Subcommand)]
pub enum PolicyCommand {
    /// Set the disclosure policy for a credential class.
    Set {
        #[arg(long, value_enum)]
        class: ClassArg,
        /// Claim keys that may be revealed; `prefix.*` allowed.
        #[arg(long = "allow")]
        allow: Vec<String>,
        /// Reveal anything requested.
        #[arg(long)]
        permissive: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassArg {
    Institutional,
    SelfIssued,
    Derivative,
}

impl From<ClassArg> for CredentialClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Institutional => CredentialClass::Institutional,
            ClassArg::SelfIssued => CredentialClass::SelfIssued,
            ClassArg::Derivative => CredentialClass::Derivative,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum AuditCommand {
    /// Monte-Carlo influence of non-skill fields on the match score.
    Boi {
        #[arg(long, value_enum, default_value_t = MatcherArg::SkillOnly)]
        matcher: MatcherArg,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Job scored by the skill-only matcher; the bundled Java role by default.
        #[arg(long)]
        job: Option<PathBuf>,
        /// Write the per-trial log here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MatcherArg {
    /// The shipped matcher: sees skills only.
    SkillOnly,
    /// Calibration matcher that rewards one institution.
    InstitutionBump,
}

/// Parses `args` and runs the command: 0 on success, 1 when the command
/// fails, 2 on a usage error.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return ExitCode::from(code);
        }
    };
    match execute(cli, out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            ExitCode::from(1)
        }
    }
}

struct Output<'a> {
    out: &'a mut dyn Write,
    format: Format,
}

impl Output<'_> {
    /// Canonical JSON, or `text` in text mode.
    fn emit<T: Serialize>(&mut self, value: &T, text: impl FnOnce() -> String) -> Result<(), GatewayError> {
        match self.format {
            Format::Canonical => {
                self.out.write_all(&canon::to_canonical(value)?)?;
                writeln!(self.out)?;
            }
            Format::Text => writeln!(self.out, "{}", text())?,
        }
        Ok(())
    }

    /// Writes `value` to `path`, or prints it.
    fn document<T: Serialize>(&mut self, value: &T, path: Option<&Path>) -> Result<(), GatewayError> {
        match path {
            Some(p) => {
                save_json(p, value)?;
                self.emit(&serde_json::json!({ "written": p }), || format!("wrote {}", p.display()))
            }
            None => {
                self.out.write_all(&canon::to_canonical(value)?)?;
                writeln!(self.out)?;
                Ok(())
            }
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), GatewayError> {
    let mut config = Config::load(cli.config.as_deref())?;
    let mut out = Output {
        out,
        format: cli.format,
    };
    let clock = SystemClock;
    let layout = Layout::new(&config);
    match cli.command {
        Command::Keygen { role, force } => {
            let keys = layout.keygen(role, force)?;
            let did = keys.did(ler_core::identity::DEFAULT_METHOD);
            out.emit(
                &serde_json::json!({ "role": role, "did": did, "key_file": layout.key_path(role) }),
                || did.to_string(),
            )
        }
        Command::Did(DidCommand::Register { role }) => {
            let keys = layout.load_key(role)?;
            let doc = layout.registry()?.register_key(&keys)?;
            out.emit(&doc, || doc.did.to_string())
        }
        Command::Did(DidCommand::Show { role, did }) => {
            let did = match (role, did) {
                (_, Some(d)) => d.parse::<Did>()?,
                (Some(r), None) => layout.load_key(r)?.did(ler_core::identity::DEFAULT_METHOD),
                (None, None) => return Err(GatewayError::Malformed("give --role or --did".into())),
            };
            let doc = layout.registry()?.resolve(&did)?;
            out.document(&doc, None)
        }
        Command::Issue {
            transcript,
            holder,
            out: path,
        } => {
            let registry = Arc::new(layout.registry()?);
            let holder = match holder {
                Some(d) => d.parse::<Did>()?,
                None => layout.load_key(Role::Holder)?.did(ler_core::identity::DEFAULT_METHOD),
            };
            let transcript: Transcript = load_json(&transcript)?;
            let issuer = IssuerNode::open(&layout, registry, clock.now())?;
            let bundle = issuer.issue(&holder, &transcript, clock.now(), &mut OsRng)?;
            out.document(&bundle, path.as_deref())
        }
        Command::Derive {
            transcript,
            syllabi,
            taxonomy,
            out: path,
        } => {
            if let Some(t) = taxonomy {
                config.taxonomy = Some(t);
                config.validate()?;
            }
            let transcript: Transcript = load_json(&transcript)?;
            let syllabi = read_syllabi(&syllabi)?;
            let holder = HolderNode::open(&config, &layout, Arc::new(layout.registry()?))?;
            let vc = holder.derive(transcript, syllabi, clock.now(), &mut OsRng)?;
            let path = path.unwrap_or_else(|| {
                layout
                    .credentials_dir()
                    .join(format!("{}.json", vc.id().trim_start_matches("urn:uuid:")))
            });
            save_json(&path, &vc)?;
            out.emit(
                &serde_json::json!({ "credential_id": vc.id(), "written": path }),
                || format!("{}\nwrote {}", vc.id(), path.display()),
            )
        }
        Command::Wallet(cmd) => {
            let holder = HolderNode::open(&config, &layout, Arc::new(layout.registry()?))?;
            match cmd {
                WalletCommand::List => {
                    let inv = holder.inventory();
                    out.emit(&inv, || {
                        inv.iter()
                            .map(|c| format!("{}\t{}\t{}\t{}", c.id, c.class, c.issued_at, c.claim_keys.len()))
                            .collect::<Vec<_>>()
                            .join("\n")
                    })
                }
                WalletCommand::Import { file } => {
                    let bundle: IssuanceBundle = load_json(&file)?;
                    let added = holder.import(&bundle)?;
                    out.emit(
                        &serde_json::json!({ "credential_id": bundle.credential.id(), "added": added }),
                        || format!("{} {}", if added { "imported" } else { "already held" }, bundle.credential.id()),
                    )
                }
                WalletCommand::Policy(PolicyCommand::Set {
                    class,
                    allow,
                    permissive,
                }) => {
                    let class = CredentialClass::from(class);
                    let policy = if permissive {
                        DisclosurePolicy::permissive(&class.to_string())
                    } else {
                        DisclosurePolicy::deny_by_default(&class.to_string(), allow, vec![])
                    };
                    holder.set_policy(class, policy.clone())?;
                    out.emit(&policy, || format!("policy for {class} updated"))
                }
            }
        }
        Command::Challenge {
            job,
            claims,
            out: path,
        } => {
            let verifier = VerifierNode::open(&config, &layout, Arc::new(layout.registry()?))?;
            let job: Option<JobRequirement> = job.as_deref().map(load_json).transpose()?;
            let c = verifier.challenge(PresentationRequest::claims(claims), job, clock.now(), &mut OsRng)?;
            out.document(&c, path.as_deref())
        }
        Command::Present {
            challenge,
            credential,
            out: path,
        } => {
            let challenge: Challenge = load_json(&challenge)?;
            let holder = HolderNode::open(&config, &layout, Arc::new(layout.registry()?))?;
            let vp = holder.present(&challenge, credential.as_deref(), clock.now())?;
            out.document(&vp, path.as_deref())
        }
        Command::Verify { presentation, job } => {
            let vp: VerifiablePresentation = load_json(&presentation)?;
            let job: Option<JobRequirement> = job.as_deref().map(load_json).transpose()?;
            let verifier = VerifierNode::open(&config, &layout, Arc::new(layout.registry()?))?;
            let outcome = verifier.verify(&vp, job.as_ref(), clock.now())?;
            out.emit(&outcome, || {
                let mut s = format!("accepted {} ({})", outcome.credential_id, outcome.credential_class);
                if let Some(r) = &outcome.response {
                    s.push_str(&format!("\ndecision: {}", r.decision));
                    if let Some(score) = r.score {
                        s.push_str(&format!("\nscore: {score:.4}"));
                    }
                }
                s
            })
        }
        Command::Match {
            job,
            credential,
            skills,
        } => {
            let job: JobRequirement = load_json(&job)?;
            let mut names = skills;
            if let Some(p) = credential {
                names.extend(credential_skill_names(&load_json(&p)?, &config)?);
            }
            let claimed: Vec<ClaimedSkill> = names
                .into_iter()
                .map(|name| ClaimedSkill { name, score: 1.0 })
                .collect();
            let provider = config.provider();
            let mut normalizer = SkillNormalizer::sample();
            normalizer.register_taxonomy(&config.taxonomy()?);
            let matcher = SkillMatcher::new(provider.as_ref(), &normalizer, config.combiner);
            let (overlap, sem, score) = matcher.evaluate(&claimed, &job)?;
            let decision = ler_core::matching::decide_threshold(score, job.threshold);
            let report = serde_json::json!({
                "job_id": job.job_id,
                "overlap": overlap,
                "sem_sim": sem.mean,
                "per_skill": sem.per_skill,
                "score": score,
                "threshold": job.threshold,
                "decision": decision,
                "verified": false,
            });
            out.emit(&report, || {
                format!(
                    "overlap {}/{} = {:.2}\nsem_sim {:.3}\nscore {:.3} (threshold {:.2})\ndecision {decision}",
                    overlap.numerator(),
                    overlap.denominator(),
                    overlap.value,
                    sem.mean,
                    score,
                    job.threshold
                )
            })
        }
        Command::Revoke {
            credential_id,
            derivative,
        } => {
            if derivative {
                let holder = HolderNode::open(&config, &layout, Arc::new(layout.registry()?))?;
                holder.revoke_derivative(&credential_id, clock.now())?;
            } else {
                let issuer = IssuerNode::open(&layout, Arc::new(layout.registry()?), clock.now())?;
                issuer.revoke(&credential_id, clock.now())?;
            }
            out.emit(&serde_json::json!({ "revoked": credential_id }), || {
                format!("revoked {credential_id}")
            })
        }
        Command::Audit(AuditCommand::Boi {
            matcher,
            trials,
            seed,
            job,
            log,
        }) => {
            let report = match matcher {
                MatcherArg::SkillOnly => {
                    let job = match job {
                        Some(p) => load_json(&p)?,
                        None => fixtures::java_job(),
                    };
                    let provider = config.provider();
                    let normalizer = SkillNormalizer::sample();
                    let m = SkillMatcher::new(provider.as_ref(), &normalizer, config.combiner);
                    let shipped = SkillOnly::new("skill-only", |v: &Vec<ClaimedSkill>| {
                        m.evaluate(v, &job).map(|r| r.2).unwrap_or(f64::NAN)
                    });
                    run_boi(&shipped, &skill_samples(), &RandomProfileEdits, trials, seed)?
                }
                MatcherArg::InstitutionBump => run_boi(
                    &InstitutionBump::new(0.1, "Ivy College"),
                    &[0.5f64],
                    &BernoulliInstitution::new(0.5, "Ivy College", "State University"),
                    trials,
                    seed,
                )?,
            };
            if let Some(p) = log {
                let mut f = std::fs::File::create(&p)?;
                report.write_log(&mut f)?;
            }
            let summary = serde_json::json!({
                "matcher": report.estimate.matcher_id,
                "boi": report.estimate.value,
                "std_error": report.std_error,
                "trials": report.estimate.trials,
                "seed": report.seed,
            });
            out.emit(&summary, || format!("{:?}", report.estimate.value))
        }
        Command::Serve { role, bind } => {
            let bind = bind.unwrap_or_else(|| config.bind.clone());
            let registry = Arc::new(layout.registry()?);
            let mut services = Services {
                issuer: None,
                holder: None,
                verifier: None,
                clock: Arc::new(SystemClock),
            };
            match role {
                Role::Issuer => services.issuer = Some(Arc::new(IssuerNode::open(&layout, registry, clock.now())?)),
                Role::Holder => services.holder = Some(Arc::new(HolderNode::open(&config, &layout, registry)?)),
                Role::Verifier => services.verifier = Some(Arc::new(VerifierNode::open(&config, &layout, registry)?)),
            }
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(service::serve(&bind, services))
        }
    }
}

fn run_boi<V>(
    matcher: &dyn AuditMatcher<V>,
    samples: &[V],
    edits: &dyn ler_core::matching::ZEditGenerator,
    trials: usize,
    seed: u64,
) -> Result<ler_core::matching::BoiReport, GatewayError> {
    Ok(estimate_boi(matcher, samples, edits, trials, seed)?)
}

/// Skill sets the skill-only audit draws from: the fixture candidate, a
/// partial profile and an off-target one.
fn skill_samples() -> Vec<Vec<ClaimedSkill>> {
    let sets: [&[&str]; 3] = [
        &fixtures::CANDIDATE_SKILLS,
        &fixtures::CANDIDATE_SKILLS[..4],
        &["C#", "SQL"],
    ];
    sets.iter()
        .map(|set| {
            set.iter()
                .map(|s| ClaimedSkill {
                    name: s.to_string(),
                    score: 1.0,
                })
                .collect()
        })
        .collect()
}

/// Names of the skills a derivative credential claims. Only the digests
/// are signed, so the names come from the claim keys.
fn credential_skill_names(vc: &VerifiableCredential, config: &Config) -> Result<Vec<String>, GatewayError> {
    let taxonomy = config.taxonomy()?;
    let mut out = BTreeSet::new();
    for c in &vc.claims {
        if let Some(id) = c.key.strip_prefix("skill.") {
            let d = taxonomy
                .get(id)
                .ok_or_else(|| GatewayError::NotFound(format!("skill {id} in taxonomy {}", taxonomy.id())))?;
            out.insert(d.name.clone());
        }
    }
    Ok(out.into_iter().collect())
}
