/**
 * Optional cross-encoder scoring backend.
 *
 * Loads a sequence-classification checkpoint through
 * `@huggingface/transformers` (installed separately; not a dependency of
 * the stub). Query and passage are tokenized as a sentence pair,
 * truncated to the model's maximum sequence length (512 for the usual
 * MiniLM/BERT rerankers), and the single relevance logit is squashed
 * through a sigmoid so scores land in (0, 1) as the protocol requires.
 */

import type { ScoreFn } from "./protocol.js";

const MAX_LENGTH = 512;

export async function loadCrossEncoder(modelId: string): Promise<ScoreFn> {
  // Loaded by name so the stub build does not depend on the package.
  const optionalDependency = "@huggingface/transformers";
  let transformers: any;
  try {
    transformers = await import(optionalDependency);
  } catch {
    throw new Error(
      "model mode needs the optional dependency: npm install @huggingface/transformers",
    );
  }
  const tokenizer = await transformers.AutoTokenizer.from_pretrained(modelId);
  const model = await transformers.AutoModelForSequenceClassification.from_pretrained(modelId);

  return async (query: string, passage: string): Promise<number> => {
    const inputs = await tokenizer(query, {
      text_pair: passage,
      padding: true,
      truncation: true,
      max_length: MAX_LENGTH,
    });
    const output = await model(inputs);
    const logit = Number(output.logits.data[0]);
    return 1 / (1 + Math.exp(-logit));
  };
}
