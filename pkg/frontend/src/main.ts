/** Hash-routed entry point: #/review (default) and #/study. */

import { ReviewApi } from './api';
import { ReviewScreen } from './review';
import { StudyScreen } from './study';

function mount(): void {
  const root = document.getElementById('app');
  if (!root) throw new Error('missing #app container');
  root.replaceChildren();

  const route = window.location.hash || '#/review';
  if (route.startsWith('#/study')) {
    new StudyScreen(root).start();
  } else {
    const screen = new ReviewScreen(root, new ReviewApi(''));
    screen.start();
    window.addEventListener('hashchange', () => screen.stop(), { once: true });
  }
}

window.addEventListener('hashchange', mount);
window.addEventListener('DOMContentLoaded', mount);
