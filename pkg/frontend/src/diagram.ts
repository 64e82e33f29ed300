/**
 * The block diagram: what the user edits on the canvas.
 *
 * A diagram is blocks plus child->parent connections. It serializes to
 * exactly one valid query document; anything else (no blocks, several
 * roots, arity violations, cycles) is reported per block and submission
 * stays disabled.
 */

import { Predicate, QueryDocument, QueryNode, parseDocument, serializeDocument } from "./document.js";

export interface FeatureBlock {
  id: string;
  type: "feature";
  feature: string;
  attribute?: string;
  predicate: Predicate;
}

export interface LogicBlock {
  id: string;
  type: "and" | "or" | "not";
}

export type Block = FeatureBlock | LogicBlock;

/** from = child block id, to = parent logic block id. */
export interface Connection {
  from: string;
  to: string;
}

export interface Diagram {
  blocks: Block[];
  connections: Connection[];
}

export interface BlockError {
  blockId: string | null;
  message: string;
}

export type BuildResult =
  | { ok: true; document: string; root: QueryNode }
  | { ok: false; errors: BlockError[] };

export function emptyDiagram(): Diagram {
  return { blocks: [], connections: [] };
}

let blockCounter = 0;

export function freshBlockId(): string {
  blockCounter += 1;
  return `b${blockCounter}`;
}

/** Children of a logic block, in connection insertion order. */
export function childrenOf(diagram: Diagram, blockId: string): string[] {
  return diagram.connections.filter((c) => c.to === blockId).map((c) => c.from);
}

export function validateDiagram(diagram: Diagram): BlockError[] {
  const errors: BlockError[] = [];
  const byId = new Map(diagram.blocks.map((b) => [b.id, b]));

  for (const conn of diagram.connections) {
    if (!byId.has(conn.from) || !byId.has(conn.to)) {
      errors.push({ blockId: null, message: "connection references a missing block" });
      continue;
    }
    const to = byId.get(conn.to)!;
    if (to.type === "feature") {
      errors.push({ blockId: to.id, message: "feature blocks take no inputs" });
    }
  }
  const outgoing = new Map<string, number>();
  for (const conn of diagram.connections) {
    outgoing.set(conn.from, (outgoing.get(conn.from) ?? 0) + 1);
  }
  for (const [id, n] of outgoing) {
    if (n > 1) {
      errors.push({ blockId: id, message: "a block can feed only one parent" });
    }
  }

  for (const block of diagram.blocks) {
    const arity = childrenOf(diagram, block.id).length;
    if (block.type === "and" || block.type === "or") {
      if (arity < 2) {
        errors.push({ blockId: block.id, message: `${block.type} needs at least 2 inputs` });
      }
    } else if (block.type === "not" && arity !== 1) {
      errors.push({ blockId: block.id, message: "not needs exactly 1 input" });
    }
  }

  if (diagram.blocks.length === 0) {
    errors.push({ blockId: null, message: "canvas is empty" });
  } else {
    const roots = diagram.blocks.filter((b) => !outgoing.has(b.id));
    if (roots.length !== 1) {
      errors.push({
        blockId: null,
        message: roots.length === 0 ? "diagram has a cycle" : "diagram must converge to one output block",
      });
    }
  }
  return errors;
}

function blockToNode(diagram: Diagram, byId: Map<string, Block>, id: string,
                     visiting: Set<string>): QueryNode {
  if (visiting.has(id)) {
    throw new Error("diagram has a cycle");
  }
  visiting.add(id);
  const block = byId.get(id)!;
  if (block.type === "feature") {
    const node: QueryNode = { kind: "feature", feature: block.feature, predicate: block.predicate };
    if (block.attribute !== undefined) {
      node.attribute = block.attribute;
    }
    visiting.delete(id);
    return node;
  }
  const childIds = childrenOf(diagram, id);
  if (block.type === "not") {
    const node: QueryNode = { kind: "not", child: blockToNode(diagram, byId, childIds[0], visiting) };
    visiting.delete(id);
    return node;
  }
  const node: QueryNode = {
    kind: block.type,
    children: childIds.map((cid) => blockToNode(diagram, byId, cid, visiting)),
  };
  visiting.delete(id);
  return node;
}

/** Serialize the diagram to its query document, or report inline errors. */
export function buildDocument(diagram: Diagram): BuildResult {
  const errors = validateDiagram(diagram);
  if (errors.length > 0) {
    return { ok: false, errors };
  }
  const byId = new Map(diagram.blocks.map((b) => [b.id, b]));
  const hasParent = new Set(diagram.connections.map((c) => c.from));
  const root = diagram.blocks.find((b) => !hasParent.has(b.id))!;
  const node = blockToNode(diagram, byId, root.id, new Set());
  return { ok: true, document: serializeDocument(node), root: node };
}

export function canSubmit(diagram: Diagram): boolean {
  return diagram.blocks.length > 0 && buildDocument(diagram).ok;
}

function nodeToBlocks(node: QueryNode, diagram: Diagram): string {
  if (node.kind === "feature") {
    const block: FeatureBlock = {
      id: freshBlockId(),
      type: "feature",
      feature: node.feature,
      predicate: node.predicate,
    };
    if (node.attribute !== undefined) {
      block.attribute = node.attribute;
    }
    diagram.blocks.push(block);
    return block.id;
  }
  const block: LogicBlock = { id: freshBlockId(), type: node.kind };
  diagram.blocks.push(block);
  const children = node.kind === "not" ? [node.child] : node.children;
  for (const child of children) {
    const childId = nodeToBlocks(child, diagram);
    diagram.connections.push({ from: childId, to: block.id });
  }
  return block.id;
}

/** Populate a fresh canvas from a document (fork / import). */
export function importDocument(text: string): Diagram {
  const doc: QueryDocument = parseDocument(text);
  const diagram = emptyDiagram();
  nodeToBlocks(doc.root, diagram);
  return diagram;
}
