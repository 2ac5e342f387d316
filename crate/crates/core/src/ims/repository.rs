use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::xml::{parse_competence, parse_item_bank, parse_profile, serialize_profile, DocumentKind};
use super::{validate_repository, CompetenceDefinition, ItemDefinition, LearnerProfile, ModelError, ValidationReport};

#[derive(Debug, Error)]
pub enum RepositoryError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
}

/// Competences, items and learner profiles loaded from a directory of XML documents.
///
/// Each `*.xml` file below the root is classified by its root element
/// (`itemBank`, `competence` or `learner`). Lookups return the first
/// definition of an id; duplicates surface through [`Repository::validate`].
#[derive(Debug, Clone, Default)]
pub struct Repository {
    pub competences: Vec<CompetenceDefinition>,
    pub items: Vec<ItemDefinition>,
    pub profiles: Vec<LearnerProfile>,
    profile_paths: HashMap<String, PathBuf>,
}

impl Repository {
    pub fn new(
        competences: Vec<CompetenceDefinition>,
        items: Vec<ItemDefinition>,
        profiles: Vec<LearnerProfile>,
    ) -> Self {
        Self {
            competences,
            items,
            profiles,
            profile_paths: HashMap::new(),
        }
    }

    /// Builds a repository from in-memory documents of any of the three kinds.
    pub fn from_documents<'a>(documents: impl IntoIterator<Item = &'a str>) -> Result<Self, ModelError> {
        let mut repo = Self::default();
        for doc in documents {
            repo.add_document(doc)?;
        }
        Ok(repo)
    }

    fn add_document(&mut self, doc: &str) -> Result<DocumentKind, ModelError> {
        let kind = DocumentKind::detect(doc)?;
        match kind {
            DocumentKind::ItemBank => self.items.extend(parse_item_bank(doc)?.items),
            DocumentKind::Competence => self.competences.push(parse_competence(doc)?),
            DocumentKind::Learner => self.profiles.push(parse_profile(doc)?),
        }
        Ok(kind)
    }

    pub fn load_dir(root: impl AsRef<Path>) -> Result<Self, RepositoryError> {
        let root = root.as_ref();
        let mut files = Vec::new();
        collect_xml(root, &mut files)?;
        files.sort();
        let mut repo = Self::default();
        for path in files {
            let doc = fs::read_to_string(&path).map_err(|source| RepositoryError::Io {
                path: path.clone(),
                source,
            })?;
            let kind = repo.add_document(&doc).map_err(|source| RepositoryError::Model {
                path: path.clone(),
                source,
            })?;
            if kind == DocumentKind::Learner {
                let id = repo.profiles.last().map(|p| p.id.clone()).unwrap_or_default();
                repo.profile_paths.entry(id).or_insert(path);
            }
        }
        Ok(repo)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_repository(&self.competences, &self.items, &self.profiles)
    }

    pub fn competence(&self, id: &str) -> Option<&CompetenceDefinition> {
        self.competences.iter().find(|c| c.id == id)
    }

    pub fn item(&self, id: &str) -> Option<&ItemDefinition> {
        self.items.iter().find(|i| i.id == id)
    }

    /// Items linked to a competence, in repository order.
    pub fn items_for(&self, competence_id: &str) -> Vec<&ItemDefinition> {
        self.items.iter().filter(|i| i.competence_ref == competence_id).collect()
    }

    pub fn profile(&self, id: &str) -> Option<&LearnerProfile> {
        self.profiles.iter().find(|p| p.id == id)
    }

    /// File a profile is stored in, or `<root>/learners/<id>.xml` for a new one.
    pub fn profile_path(&self, root: &Path, id: &str) -> PathBuf {
        self.profile_paths
            .get(id)
            .cloned()
            .unwrap_or_else(|| root.join("learners").join(format!("{id}.xml")))
    }
}

fn collect_xml(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), RepositoryError> {
    let io = |source| RepositoryError::Io {
        path: dir.to_path_buf(),
        source,
    };
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_dir() {
            collect_xml(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "xml") {
            out.push(path);
        }
    }
    Ok(())
}

/// Writes a profile by writing a sibling temp file and renaming it over the target.
pub fn write_profile_atomic(path: &Path, profile: &LearnerProfile) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("xml.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(serialize_profile(profile).as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_directory_is_an_io_error() {
        let err = Repository::load_dir("/definitely/not/here").unwrap_err();
        assert!(matches!(err, RepositoryError::Io { .. }));
    }

    #[test]
    fn atomic_write_then_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("learners").join("l1.xml");
        let mut p = LearnerProfile::new("l1");
        p.identification.name = "Ada".into();
        write_profile_atomic(&path, &p).unwrap();
        let repo = Repository::load_dir(dir.path()).unwrap();
        assert_eq!(repo.profile("l1"), Some(&p));
        assert_eq!(repo.profile_path(dir.path(), "l1"), path);
        assert!(!path.with_extension("xml.tmp").exists());
    }

    #[test]
    fn unreadable_document_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.xml"), "<competence identifier='x'>").unwrap();
        let err = Repository::load_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains("bad.xml"), "{err}");
    }
}
