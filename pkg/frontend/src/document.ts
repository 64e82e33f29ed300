/**
 * Query document types and the canonical serializer.
 *
 * Serialization must be byte-identical to the backend's: compact JSON,
 * fixed key order (kind, feature, attribute?, predicate / kind, children /
 * kind, child; predicates op-first), integral numbers without a decimal
 * point. JSON.stringify already renders 2.0 as "2", matching the backend.
 */

export type PredicateOp =
  | "gt"
  | "lt"
  | "text_contains"
  | "count_at_least"
  | "is_active"
  | "equals";

export interface Predicate {
  op: PredicateOp;
  threshold?: number;
  pattern?: string;
  case_insensitive?: boolean;
  n?: number;
  window_s?: number;
  label?: string;
}

export interface FeatureNode {
  kind: "feature";
  feature: string;
  attribute?: string;
  predicate: Predicate;
}

export interface LogicNode {
  kind: "and" | "or";
  children: QueryNode[];
}

export interface NotNode {
  kind: "not";
  child: QueryNode;
}

export type QueryNode = FeatureNode | LogicNode | NotNode;

export interface QueryDocument {
  schema_version: "1";
  root: QueryNode;
}

const PREDICATE_FIELD_ORDER: Record<PredicateOp, string[]> = {
  gt: ["threshold"],
  lt: ["threshold"],
  text_contains: ["pattern", "case_insensitive"],
  count_at_least: ["n", "window_s"],
  is_active: [],
  equals: ["label"],
};

function orderedPredicate(pred: Predicate): Record<string, unknown> {
  const out: Record<string, unknown> = { op: pred.op };
  for (const field of PREDICATE_FIELD_ORDER[pred.op]) {
    const value = (pred as unknown as Record<string, unknown>)[field];
    if (value === undefined) {
      throw new Error(`predicate ${pred.op} is missing ${field}`);
    }
    out[field] = value;
  }
  return out;
}

function orderedNode(node: QueryNode): Record<string, unknown> {
  if (node.kind === "feature") {
    const out: Record<string, unknown> = { kind: "feature", feature: node.feature };
    if (node.attribute !== undefined) {
      out.attribute = node.attribute;
    }
    out.predicate = orderedPredicate(node.predicate);
    return out;
  }
  if (node.kind === "not") {
    return { kind: "not", child: orderedNode(node.child) };
  }
  return { kind: node.kind, children: node.children.map(orderedNode) };
}

/** Serialize to the shareable document form (schema_version "1"). */
export function serializeDocument(root: QueryNode): string {
  return JSON.stringify({ schema_version: "1", root: orderedNode(root) });
}

export function parseDocument(text: string): QueryDocument {
  const doc = JSON.parse(text) as QueryDocument;
  if (doc.schema_version !== "1") {
    throw new Error(`unsupported schema_version ${String(doc.schema_version)}`);
  }
  if (!doc.root || typeof doc.root !== "object") {
    throw new Error("document has no root node");
  }
  return doc;
}

/** Feature names referenced by the query, sorted and unique. */
export function usedFeatures(node: QueryNode): string[] {
  const names = new Set<string>();
  const walk = (n: QueryNode): void => {
    if (n.kind === "feature") {
      names.add(n.feature);
    } else if (n.kind === "not") {
      walk(n.child);
    } else {
      n.children.forEach(walk);
    }
  };
  walk(node);
  return [...names].sort();
}

/** Numeric, sweepable parameters with their engine paths ("root...<param>"). */
export interface SweepableParameter {
  path: string;
  label: string;
  value: number;
}

export function sweepableParameters(root: QueryNode): SweepableParameter[] {
  const out: SweepableParameter[] = [];
  const walk = (node: QueryNode, path: string): void => {
    if (node.kind === "feature") {
      const pred = node.predicate;
      if (pred.op === "gt" || pred.op === "lt") {
        out.push({
          path: `${path}.threshold`,
          label: `${node.feature}${node.attribute ? "." + node.attribute : ""} ${pred.op} threshold`,
          value: pred.threshold as number,
        });
      } else if (pred.op === "count_at_least") {
        out.push({ path: `${path}.n`, label: `${node.feature} count n`, value: pred.n as number });
        out.push({
          path: `${path}.window_s`,
          label: `${node.feature} count window (s)`,
          value: pred.window_s as number,
        });
      }
      return;
    }
    if (node.kind === "not") {
      walk(node.child, `${path}.0`);
      return;
    }
    node.children.forEach((child, i) => walk(child, `${path}.${i}`));
  };
  walk(root, "root");
  return out;
}
