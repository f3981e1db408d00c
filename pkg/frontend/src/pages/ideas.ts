// Idea page: refinement-lineage tree, comparison and experiment tables with
// versioned cell edits, feedback box, and idea confirmation.

import { el, clear } from '../dom';
import type { SessionView } from '../state';
import type { Idea, StageTable, TableEdit } from '../types';

export interface IdeasPageActions {
  submitFeedback(text: string): Promise<void>;
  confirmIdea(index: number): Promise<void>;
  patchTable(name: string, version: number, edit: TableEdit): Promise<void>;
}

interface LineageNode {
  index: number;
  idea: Idea;
  children: LineageNode[];
}

export function lineageForest(ideas: Idea[]): LineageNode[] {
  const nodes: LineageNode[] = ideas.map((idea, index) => ({ index, idea, children: [] }));
  const roots: LineageNode[] = [];
  nodes.forEach((node) => {
    const parent = node.idea.extra['parent_index'];
    if (typeof parent === 'number' && parent >= 0 && parent < nodes.length) {
      nodes[parent].children.push(node);
    } else {
      roots.push(node);
    }
  });
  return roots;
}

function renderTreeNode(
  node: LineageNode,
  selected: number | null,
  onSelect: (index: number) => void,
): HTMLElement {
  const label = el(
    'button',
    {
      class: `idea-node${node.index === selected ? ' selected' : ''}`,
      'data-idea-index': String(node.index),
      onclick: () => onSelect(node.index),
    },
    `${node.idea.title} (${node.idea.status})`,
  );
  const item = el('li', {}, label);
  if (node.children.length > 0) {
    const childList = el('ul', {});
    node.children.forEach((child) => childList.append(renderTreeNode(child, selected, onSelect)));
    item.append(childList);
  }
  return item;
}

function renderTable(table: StageTable, name: string): HTMLElement {
  const head = el('tr', {});
  table.columns.forEach(([, header]) => head.append(el('th', {}, header)));
  const tableNode = el('table', { 'data-table': name, 'data-version': String(table.version) });
  tableNode.append(head);
  table.rows.forEach((row, rowIndex) => {
    const rowNode = el('tr', {});
    table.columns.forEach(([key]) => {
      const value = row[key];
      const text = Array.isArray(value) ? value.join(', ') : String(value ?? '');
      rowNode.append(
        el('td', { 'data-row': String(rowIndex), 'data-column': key }, text),
      );
    });
    tableNode.append(rowNode);
  });
  return tableNode;
}

function renderCellEditor(
  table: StageTable,
  name: string,
  actions: IdeasPageActions,
  errorBanner: HTMLElement,
): HTMLElement {
  const rowInput = el('input', { id: `${name}-edit-row`, type: 'number', value: '0' });
  const columnSelect = el('select', { id: `${name}-edit-column` });
  table.columns.forEach(([key]) => columnSelect.append(el('option', { value: key }, key)));
  const valueInput = el('input', { id: `${name}-edit-value`, type: 'text' });
  const applyButton = el('button', { id: `${name}-edit-apply` }, 'Apply edit');
  applyButton.addEventListener('click', () => {
    const edit: TableEdit = {
      row: Number(rowInput.value),
      column: columnSelect.value,
      new_value: valueInput.value,
    };
    void actions.patchTable(name, table.version, edit).catch((error: Error) => {
      errorBanner.textContent = error.message.includes('409') || /stale/i.test(error.message)
        ? 'Table changed on the server; reloading the latest version.'
        : error.message;
      errorBanner.classList.remove('hidden');
    });
  });
  return el('div', { class: 'cell-editor' }, rowInput, columnSelect, valueInput, applyButton);
}

export function renderIdeasPage(
  root: HTMLElement,
  view: SessionView,
  actions: IdeasPageActions,
): void {
  const errorBanner = el('div', { id: 'ideas-error', class: 'banner hidden' });
  const detail = el('div', { id: 'idea-detail' });
  const ideas = view.snapshot.ideas;
  let selected = view.snapshot.selected_index;

  const showDetail = (index: number) => {
    selected = index;
    clear(detail);
    const idea = ideas[index];
    if (!idea) return;
    detail.append(
      el('h3', {}, idea.title),
      el('p', {}, idea.narrative['problem'] ?? ''),
      el('p', {}, `Plan: ${idea.experiment_plan}`),
      el(
        'p',
        { id: 'idea-scores' },
        `impact ${idea.scores['impact'].value} / feasibility ${idea.scores['feasibility'].value}` +
          ` / novelty ${idea.scores['novelty'].value}`,
      ),
    );
  };

  const tree = el('ul', { id: 'lineage-tree' });
  lineageForest(ideas).forEach((node) => tree.append(renderTreeNode(node, selected, showDetail)));

  const feedbackInput = el('textarea', { id: 'feedback-text', placeholder: 'Refinement feedback' });
  const feedbackButton = el('button', { id: 'send-feedback' }, 'Send feedback');
  feedbackButton.addEventListener('click', () => {
    const text = feedbackInput.value.trim();
    if (!text) return;
    void actions.submitFeedback(text).catch((error: Error) => {
      errorBanner.textContent = error.message;
      errorBanner.classList.remove('hidden');
    });
  });

  const confirmButton = el('button', { id: 'confirm-idea' }, 'Confirm idea');
  confirmButton.addEventListener('click', () => {
    void actions.confirmIdea(selected ?? 0).catch((error: Error) => {
      errorBanner.textContent = error.message;
      errorBanner.classList.remove('hidden');
    });
  });

  root.append(el('h1', {}, 'Candidate ideas'), errorBanner, tree, detail);
  if (view.ideasTable) {
    root.append(
      el('h2', {}, 'Comparison table'),
      renderTable(view.ideasTable, 'ideas'),
      renderCellEditor(view.ideasTable, 'ideas', actions, errorBanner),
    );
  }
  if (view.experimentTable) {
    root.append(el('h2', {}, 'Experiment plan table'), renderTable(view.experimentTable, 'experiment'));
  }
  root.append(
    el('h2', {}, 'Refine'),
    feedbackInput,
    feedbackButton,
    confirmButton,
  );
  if (selected !== null) showDetail(selected);
}
