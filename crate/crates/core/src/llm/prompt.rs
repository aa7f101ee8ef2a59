//! Prompt templates. Every prompt is a dataset description followed by a question.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptKind {
    Summary,
    Keywords,
    SoftLabel,
    EdgeJudge,
}

impl PromptKind {
    pub const ALL: [PromptKind; 4] = [
        PromptKind::Summary,
        PromptKind::Keywords,
        PromptKind::SoftLabel,
        PromptKind::EdgeJudge,
    ];

    /// Number of node texts the template takes.
    pub fn arity(self) -> usize {
        match self {
            PromptKind::EdgeJudge => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PromptKind::Summary => "summary",
            PromptKind::Keywords => "keywords",
            PromptKind::SoftLabel => "soft-label",
            PromptKind::EdgeJudge => "edge-judge",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub dataset_description: String,
    pub question: String,
    pub full_text: String,
}

const KEYWORDS: &str = "Please help me identify the five keywords from its title and abstract that are most relevant for classification, and directly output the keywords. The title and abstract of the paper are as follows:";
const SOFT_LABEL: &str = "Based on its title and abstract, please predict the most appropriate label for this paper and provide only the label as your response. The title and abstract of the paper are as follows:";
const SUMMARY: &str = "Please summarize the title and abstract to improve their suitability for the classification task. Output only the summary text, without including any irrelevant content. The title and abstract of the paper are as follows:";
const EDGE_JUDGE: &str = "You are provided with the text information of two nodes and their predicted category pseudo-label. Use this information to evaluate whether an edge should exist between the two nodes, and return a probability value between 0 and 1 representing the likelihood of the edge's existence. Only output the probability value, without any additional or irrelevant content.";

/// Instantiates the template for `kind`.
///
/// Summary, keywords and soft-label prompts take one text and no labels; the
/// edge prompt takes two texts and the two predicted label names. A non-empty
/// description is separated from the question by a newline, which becomes part
/// of the stored description so that `full_text == dataset_description + question`.
pub fn render_prompt(
    kind: PromptKind,
    dataset_desc: &str,
    texts: &[&str],
    labels: &[&str],
) -> Result<RenderedPrompt, GatewayError> {
    let label_arity = if kind == PromptKind::EdgeJudge { 2 } else { 0 };
    if texts.len() != kind.arity() || labels.len() != label_arity {
        return Err(GatewayError::Arity {
            kind,
            texts: texts.len(),
            labels: labels.len(),
        });
    }
    let question = match kind {
        PromptKind::Keywords => format!("{KEYWORDS}{}", texts[0]),
        PromptKind::SoftLabel => format!("{SOFT_LABEL}{}", texts[0]),
        PromptKind::Summary => format!("{SUMMARY}{}", texts[0]),
        PromptKind::EdgeJudge => format!(
            "{EDGE_JUDGE} As for Node 1: {}. Your prediction label is {}; As for Node 2: {}. Your prediction label is {}.",
            texts[0], labels[0], texts[1], labels[1]
        ),
    };
    let mut dataset_description = dataset_desc.to_owned();
    if !dataset_description.is_empty() && !dataset_description.ends_with(char::is_whitespace) {
        dataset_description.push('\n');
    }
    let full_text = format!("{dataset_description}{question}");
    Ok(RenderedPrompt {
        dataset_description,
        question,
        full_text,
    })
}

/// Dataset descriptions for the public benchmarks, plus a generic builder.
pub mod descriptions {
    pub const CORA: &str = "Now, here is a paper from the Cora dataset. This paper falls into one of seven categories: Case-based, Genetic Algorithms, Neural Networks, Probabilistic Methods, Reinforcement Learning, Rule Learning, and Theory.";
    pub const CITESEER: &str = "Now, here is a paper from the Citeseer dataset. This paper falls into one of six categories: Agents, Machine Learning, Information Retrieval, Databases, Human-Computer Interaction, or Artificial Intelligence.";
    pub const PUBMED: &str = "The following is a paper from the PubMed dataset, which contains 19,717 scientific publications related to diabetes. These publications are categorized into three classes: Experimentally Induced Diabetes, Type 1 Diabetes, and Type 2 Diabetes.";
    pub const WIKICS: &str = "Here is an article from the WikiCS dataset. This dataset is a Wikipedia-based resource developed for benchmarking Graph Neural Networks (GNNs). It is derived from Wikipedia categories and includes 10 classes representing various branches of computer science, characterized by a high degree of connectivity. The 10 classes are Computational Linguistics, Databases, Operating Systems, Computer Architecture, Computer Security, Internet Protocols, Computer File Systems, Distributed Computing Architectures, Web Technologies, and Programming Languages.";
    pub const INSTAGRAM: &str = "This is a post from Instagram, a social network where edges represent following relationships and nodes represent users. The task is to classify users into two categories: commercial and normal.";
    pub const REDDIT: &str = "This is a post from the Reddit dataset, a social network where nodes represent users, and node features are derived from the content of users' historically published subreddits. Edges represent whether two users have replied to each other. The task is to classify users as belonging to the top 50 percent in popularity, based on the average score of all their subreddits. Node text features are generated from the content of each user\u{2019}s last three posts. Users are categorized as 'popular' or 'normal' based on the median of their average historical post scores, with those above the median classified as 'popular' and the rest as 'normal'.";
    pub const ELE_PHOTO: &str = "Here is a product review from the Elo-Potho dataset. The Elo-Potho dataset is derived from the Amazon-Electronics dataset. In this dataset, nodes represent electronics products, and edges indicate frequent co-purchases or co-views between products. Each node is labeled according to a three-level classification scheme for electronics products. User reviews serve as the textual attributes for the nodes; when multiple reviews are available for a product, the review with the highest number of votes is selected. If no such review exists, a random review is used. The task is to classify electronics products into 12 predefined categories. The categories are: Amazon Echo, Camera, Cell Phones, Clothing, Computers, Home and Kitchen, Laptops, Music, Office Supplies, Personal Care, Shoes, Sports and Outdoors.";

    /// Looks up a built-in description by dataset name (case-insensitive).
    pub fn preset(name: &str) -> Option<&'static str> {
        match name.to_ascii_lowercase().as_str() {
            "cora" => Some(CORA),
            "citeseer" => Some(CITESEER),
            "pubmed" => Some(PUBMED),
            "wikics" => Some(WIKICS),
            "instagram" => Some(INSTAGRAM),
            "reddit" => Some(REDDIT),
            "ele-photo" | "elo-photo" | "photo" => Some(ELE_PHOTO),
            _ => None,
        }
    }

    /// A description in the same register for datasets without a preset.
    pub fn generic(dataset: &str, class_names: &[String]) -> String {
        format!(
            "Now, here is a document from the {dataset} dataset. It falls into one of {} categories: {}.",
            class_names.len(),
            class_names.join(", ")
        )
    }
}

impl FromStr for PromptKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "summary" => Ok(PromptKind::Summary),
            "keywords" => Ok(PromptKind::Keywords),
            "soft-label" => Ok(PromptKind::SoftLabel),
            "edge-judge" => Ok(PromptKind::EdgeJudge),
            other => Err(format!("unknown prompt kind '{other}'")),
        }
    }
}
