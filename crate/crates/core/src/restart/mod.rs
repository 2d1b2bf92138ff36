//! Restart from an image set: rebuild the descriptor table, replay every
//! recipe against a fresh backend, check the results, and restore counters
//! and drained messages.

mod shadow;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::backends::{make_backend, Backend, Combiner, Phase, Source, TagSel, Transport};
use crate::checkpoint::{shadow_entry, CheckpointImage, ImageError};
use crate::error::{Error, Result};
use crate::reduce::{self, ReductionRegistry};
use crate::vid::{
    ggid_compute, Body, CommRecipe, DescriptorTable, GroupRecipe, ObjectKind, RequestKind, TypeRecipe, VirtualId,
};
use crate::wrappers::{constant_names, CounterTable, Runtime};
use crate::backends::BackendHandle;

pub use shadow::{ShadowEntry, ShadowQueue};

/// One image per rank, indexed by rank.
#[derive(Debug)]
pub struct ImageSet {
    pub dir: PathBuf,
    pub epoch: u32,
    pub images: Vec<CheckpointImage>,
}

impl ImageSet {
    pub fn world_size(&self) -> u32 {
        self.images.len() as u32
    }
}

fn epoch_of(dir: &Path) -> Option<u32> {
    dir.file_name()?.to_str()?.strip_prefix("epoch_")?.parse().ok()
}

fn rank_of(file: &Path) -> Option<u32> {
    file.file_name()?.to_str()?.strip_prefix("ckpt_rank")?.strip_suffix(".mcri")?.parse().ok()
}

/// `dir` is either an epoch directory or a base directory, in which case the
/// highest epoch found is used.
pub fn resolve_epoch_dir(dir: &Path) -> Result<(PathBuf, u32)> {
    if let Some(e) = epoch_of(dir) {
        return Ok((dir.to_path_buf(), e));
    }
    let mut best: Option<(u32, PathBuf)> = None;
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if let Some(e) = epoch_of(&p).filter(|_| p.is_dir()) {
            if best.as_ref().is_none_or(|(b, _)| e > *b) {
                best = Some((e, p));
            }
        }
    }
    match best {
        Some((e, p)) => Ok((p, e)),
        None if fs::read_dir(dir)?.flatten().any(|f| rank_of(&f.path()).is_some()) => Ok((dir.to_path_buf(), 0)),
        None => Err(Error::ImageSetIncomplete { found: 0, expected: 0 }),
    }
}

/// Read and validate every rank image of one checkpoint.
pub fn load_image_set(dir: &Path) -> Result<ImageSet> {
    let (dir, epoch) = resolve_epoch_dir(dir)?;
    let mut files: Vec<(u32, PathBuf)> =
        fs::read_dir(&dir)?.flatten().filter_map(|f| rank_of(&f.path()).map(|r| (r, f.path()))).collect();
    files.sort();
    let Some((_, first)) = files.first() else {
        return Err(Error::ImageSetIncomplete { found: 0, expected: 0 });
    };
    let expected = CheckpointImage::read(first)?.header.world_size as usize;
    let mut images = Vec::with_capacity(expected);
    for r in 0..expected as u32 {
        let Some((_, path)) = files.iter().find(|(fr, _)| *fr == r) else {
            return Err(Error::ImageSetIncomplete { found: files.len(), expected });
        };
        let img = CheckpointImage::read(path)?;
        if img.header.rank != r || img.header.world_size as usize != expected {
            return Err(ImageError::Malformed(format!(
                "{} claims rank {} of {}",
                path.display(),
                img.header.rank,
                img.header.world_size
            ))
            .into());
        }
        images.push(img);
    }
    if files.len() != expected {
        return Err(Error::ImageSetIncomplete { found: files.len(), expected });
    }
    Ok(ImageSet { dir, epoch, images })
}

/// A rank brought back from an image.
pub struct Restarted {
    pub runtime: Runtime,
    pub app_state: Vec<u8>,
}

/// Restart one rank on the backend registered under `backend_name`.
/// Collective: every rank of the image set must call it concurrently.
pub fn restart_rank(image: CheckpointImage, epoch: u32, backend_name: &str, transport: Arc<Transport>) -> Result<Restarted> {
    let backend = make_backend(backend_name)
        .ok_or_else(|| Error::Unsupported(format!("unknown backend `{backend_name}`")))?;
    restart_with_backend(image, epoch, backend, transport, reduce::global())
}

pub fn restart_with_backend(
    image: CheckpointImage,
    epoch: u32,
    backend: Box<dyn Backend>,
    transport: Arc<Transport>,
    reductions: Arc<ReductionRegistry>,
) -> Result<Restarted> {
    if image.header.world_size != transport.world_size() {
        return Err(Error::Unsupported(format!(
            "image of a {}-rank run restarted on {} ranks",
            image.header.world_size,
            transport.world_size()
        )));
    }
    check_constant_map(&image.constants)?;
    let mut rt = Runtime::start(backend, transport, image.header.rank, reductions)?;
    match rebuild(&mut rt, image, epoch) {
        Ok(app_state) => Ok(Restarted { runtime: rt, app_state }),
        Err(e) => {
            let _ = rt.backend.finalize();
            Err(e)
        }
    }
}

fn check_constant_map(saved: &[(String, VirtualId)]) -> Result<()> {
    let fresh = crate::wrappers::ConstantMap::standard();
    let names: Vec<&str> = constant_names().collect();
    if saved.len() != names.len() {
        return Err(ImageError::Malformed(format!("{} constants saved, {} known", saved.len(), names.len())).into());
    }
    for (name, v) in saved {
        if fresh.vid_of(name) != Some(*v) {
            return Err(ImageError::Malformed(format!("constant {name} saved as {v:?}")).into());
        }
    }
    Ok(())
}

fn rebuild(rt: &mut Runtime, image: CheckpointImage, epoch: u32) -> Result<Vec<u8>> {
    let CheckpointImage { header, kind_states, descriptors, counters, drained, app_state, .. } = image;
    rt.table = DescriptorTable::restore(descriptors, kind_states, header.creation_seq_high_water)?;
    rt.counters = CounterTable::restore(counters.entries, counters.retired);
    rt.ggid_seq = counters.ggid_seq.into_iter().collect();
    rt.epoch = epoch + 1;
    rt.next_arrival = drained.iter().map(|m| m.arrival_index + 1).max().unwrap_or(0);
    // Shadow entries only need descriptors, and must be in place before
    // receives are re-posted.
    for m in drained {
        let e = shadow_entry(rt, m)?;
        rt.shadow.push(e);
    }

    rt.set_phase(Phase::Replay);
    let replayed = replay(rt);
    rt.set_phase(Phase::Normal);
    replayed?;

    rt.set_phase(Phase::SelfCheck);
    let mut temps = Vec::new();
    let checked = self_check(rt, &mut temps);
    rt.set_phase(Phase::Normal);
    for g in temps {
        rt.backend.group_free(g)?;
    }
    checked?;
    Ok(app_state)
}

fn failure(vid: VirtualId, reason: impl Into<String>) -> Error {
    Error::ReplayFailure { vid, reason: reason.into() }
}

/// Re-create every object in creation order.
fn replay(rt: &mut Runtime) -> Result<()> {
    rt.bind_eager_constants()?;
    // Everything the self-check touches must be bound before it starts.
    rt.real(rt.comm_world(), ObjectKind::Comm)?;
    rt.real(rt.comm_self(), ObjectKind::Comm)?;
    rt.world_group()?;

    let mut order: Vec<(u64, VirtualId)> = rt
        .table
        .iter_all()
        .filter(|(v, _)| !v.is_predefined())
        .map(|(v, d)| (d.creation_seq, v))
        .collect();
    order.sort_unstable();

    for (_, v) in order {
        let body = rt.table.get(v)?.body.clone();
        let h = match body {
            Body::Comm(c) => {
                let h = match c.recipe {
                    CommRecipe::Split { parent, color, key } => {
                        let p = rt.real(parent, ObjectKind::Comm)?;
                        rt.backend.comm_split(p, color, key)?
                    }
                    CommRecipe::Dup { parent } => {
                        let p = rt.real(parent, ObjectKind::Comm)?;
                        rt.backend.comm_dup(p)?
                    }
                    CommRecipe::Create { parent, group } => {
                        let p = rt.real(parent, ObjectKind::Comm)?;
                        let g = rt.real(group, ObjectKind::Group)?;
                        rt.backend.comm_create(p, g)?.ok_or_else(|| failure(v, "no communicator for a member"))?
                    }
                    CommRecipe::World | CommRecipe::SelfComm => {
                        return Err(failure(v, "predefined communicator recipe in an application slot"))
                    }
                };
                Some(h)
            }
            Body::Group(g) => Some(match g.recipe {
                GroupRecipe::FromComm { comm } => {
                    let c = rt.real(comm, ObjectKind::Comm)?;
                    rt.backend.comm_group(c)?
                }
                GroupRecipe::Incl { parent, ranks } => {
                    let p = rt.real(parent, ObjectKind::Group)?;
                    rt.backend.group_incl(p, &ranks)?
                }
            }),
            Body::Datatype(t) => {
                let h = match t.recipe {
                    TypeRecipe::Contiguous { count, child } => {
                        let c = rt.real(child, ObjectKind::Datatype)?;
                        rt.backend.type_contiguous(count, c)?
                    }
                    TypeRecipe::Vector { count, blocklen, stride, child } => {
                        let c = rt.real(child, ObjectKind::Datatype)?;
                        rt.backend.type_vector(count, blocklen, stride, c)?
                    }
                    TypeRecipe::Named(_) => return Err(failure(v, "named datatype in an application slot")),
                };
                if t.committed {
                    rt.backend.type_commit(h)?;
                }
                Some(h)
            }
            Body::Op(o) => {
                if !rt.reductions.contains(&o.fn_name) {
                    return Err(failure(v, format!("unknown reduction function `{}`", o.fn_name)));
                }
                Some(rt.backend.op_create(&o.fn_name, o.commutative)?)
            }
            Body::Request(r) => {
                if r.completed() {
                    None
                } else if r.kind == RequestKind::Isend {
                    return Err(failure(v, "send request incomplete at checkpoint"));
                } else if let Some(done) = rt.shadow_completion(&r)? {
                    if let Body::Request(saved) = &mut rt.table.get_mut(v)?.body {
                        saved.completion = Some(done);
                    }
                    None
                } else {
                    let t = rt.real(r.datatype, ObjectKind::Datatype)?;
                    let c = rt.real(r.comm, ObjectKind::Comm)?;
                    let source = r.peer.map_or(Source::Any, Source::Rank);
                    let tag = r.tag.map_or(TagSel::Any, TagSel::Tag);
                    let h = rt.backend.irecv(r.count as usize, t, source, tag, c)?;
                    if let Body::Request(saved) = &mut rt.table.get_mut(v)?.body {
                        saved.reposted = true;
                    }
                    Some(h)
                }
            }
        };
        rt.table.set_real(v, h)?;
    }
    Ok(())
}

/// Decode what the backend built and compare it with the recorded recipes.
/// Uses only group and datatype decoding calls. Temporary groups are
/// returned through `temps` so they can be freed afterwards.
fn self_check(rt: &mut Runtime, temps: &mut Vec<BackendHandle>) -> Result<()> {
    let comms: Vec<(VirtualId, Vec<u32>, u32)> = rt
        .table
        .iter(ObjectKind::Comm)
        .filter_map(|(v, d)| d.as_comm().map(|c| (v, c.members.clone(), c.ggid)))
        .collect();
    for (v, recorded, ggid) in comms {
        let h = rt.table.vid_to_real(v)?;
        let (decoded, g) = rt.decode_members(h)?;
        temps.push(g);
        if decoded != recorded || ggid_compute(&decoded)? != ggid {
            return Err(Error::MembershipMismatch { vid: v, recorded, decoded });
        }
    }

    let wg = rt.world_group()?;
    let n = rt.world_size;
    let groups: Vec<(VirtualId, Vec<u32>)> =
        rt.table.iter(ObjectKind::Group).filter_map(|(v, d)| d.as_group().map(|g| (v, g.members.clone()))).collect();
    for (v, recorded) in groups {
        let h = rt.table.vid_to_real(v)?;
        let probe: Vec<u32> = (0..=recorded.len() as u32).collect();
        let t = rt.backend.group_translate_ranks(h, &probe, wg)?;
        let decoded: Vec<u32> = t.iter().map_while(|x| *x).collect();
        if decoded != recorded || decoded.iter().any(|&w| w >= n) {
            return Err(Error::MembershipMismatch { vid: v, recorded, decoded });
        }
    }

    let types: Vec<(VirtualId, TypeRecipe)> = rt
        .table
        .iter(ObjectKind::Datatype)
        .filter(|(v, _)| !v.is_predefined())
        .filter_map(|(v, d)| d.as_type().map(|t| (v, t.recipe.clone())))
        .collect();
    for (v, recipe) in types {
        let h = rt.table.vid_to_real(v)?;
        let env = rt.backend.type_get_envelope(h)?;
        let combiner = match recipe {
            TypeRecipe::Named(_) => Combiner::Named,
            TypeRecipe::Contiguous { .. } => Combiner::Contiguous,
            TypeRecipe::Vector { .. } => Combiner::Vector,
        };
        if env.combiner != combiner {
            return Err(failure(v, format!("combiner {:?}, recorded {combiner:?}", env.combiner)));
        }
        let contents = rt.backend.type_get_contents(h)?;
        if contents.integers != recipe.integers() {
            return Err(failure(v, format!("integers {:?}, recorded {:?}", contents.integers, recipe.integers())));
        }
        let child: Vec<BackendHandle> = match recipe.child() {
            Some(c) => vec![rt.table.vid_to_real(c)?],
            None => vec![],
        };
        if contents.datatypes != child {
            return Err(failure(v, "child datatype differs from the recorded one"));
        }
    }
    Ok(())
}
